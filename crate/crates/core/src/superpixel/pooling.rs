use super::{SuperpixelMap, SuperpixelTable};
use crate::error::Result;
use crate::imaging::{LabelMap, ProbMap};

/// Averages a probability map over each superpixel:
/// `Ps(c,k) = 1/N(k) * sum_{j in k} P(c,j)`.
pub fn pool_probabilities(probs: &ProbMap, sp: &SuperpixelMap) -> Result<SuperpixelTable> {
    sp.check_shape(probs.height(), probs.width())?;
    let (c_n, k_n, m) = (probs.num_classes(), sp.num_superpixels(), sp.num_pixels());
    let mut values = vec![0.0; c_n * k_n];
    for c in 0..c_n {
        let plane = &probs.data()[c * m..(c + 1) * m];
        let row = &mut values[c * k_n..(c + 1) * k_n];
        for (j, &p) in plane.iter().enumerate() {
            row[sp.index_of(j)] += p;
        }
        for (v, &n) in row.iter_mut().zip(sp.sizes()) {
            *v /= n as f64;
        }
    }
    SuperpixelTable::new(c_n, values, sp.sizes().to_vec())
}

/// Soft labels: the class histogram of each superpixel, normalised by `N(k)`.
pub fn pool_labels(labels: &LabelMap, sp: &SuperpixelMap) -> Result<SuperpixelTable> {
    sp.check_shape(labels.height(), labels.width())?;
    let (c_n, k_n) = (labels.num_classes(), sp.num_superpixels());
    let mut counts = vec![0usize; c_n * k_n];
    for (j, &y) in labels.data().iter().enumerate() {
        counts[y as usize * k_n + sp.index_of(j)] += 1;
    }
    let values = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| n as f64 / sp.sizes()[i % k_n] as f64)
        .collect();
    SuperpixelTable::new(c_n, values, sp.sizes().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    #[test]
    fn single_superpixel_gives_global_mean() {
        let probs = ProbMap::new(2, 1, 4, vec![0.1, 0.2, 0.3, 0.4, 0.9, 0.8, 0.7, 0.6]).unwrap();
        let sp = SuperpixelMap::new(1, 4, 1, vec![1; 4]).unwrap();
        let t = pool_probabilities(&probs, &sp).unwrap();
        assert!((t.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((t.get(1, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn constant_distribution_is_preserved() {
        let probs = ProbMap::new(2, 2, 3, [vec![0.3; 6], vec![0.7; 6]].concat()).unwrap();
        let sp = SuperpixelMap::new(2, 3, 3, vec![1, 1, 2, 3, 3, 2]).unwrap();
        let t = pool_probabilities(&probs, &sp).unwrap();
        for k in 0..3 {
            assert!((t.get(0, k) - 0.3).abs() < 1e-12 && (t.get(1, k) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn three_pixel_average() {
        let probs = ProbMap::new(2, 1, 3, vec![0.8, 0.6, 0.1, 0.2, 0.4, 0.9]).unwrap();
        let sp = SuperpixelMap::new(1, 3, 1, vec![1; 3]).unwrap();
        let t = pool_probabilities(&probs, &sp).unwrap();
        assert!((t.get(1, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn label_histograms() {
        let labels = LabelMap::new(1, 5, 2, vec![1, 1, 0, 1, 1]).unwrap();
        let sp = SuperpixelMap::new(1, 5, 2, vec![1, 1, 1, 2, 2]).unwrap();
        let t = pool_labels(&labels, &sp).unwrap();
        assert_eq!(t.column(0), vec![1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(t.column(1), vec![0.0, 1.0]);

        let halves = LabelMap::new(2, 2, 2, vec![0, 1, 0, 1]).unwrap();
        let whole = SuperpixelMap::new(2, 2, 1, vec![1; 4]).unwrap();
        assert_eq!(
            pool_labels(&halves, &whole).unwrap().column(0),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn shape_mismatch_is_domain_error() {
        let labels = LabelMap::new(2, 2, 2, vec![0; 4]).unwrap();
        let sp = SuperpixelMap::new(1, 4, 1, vec![1; 4]).unwrap();
        assert!(matches!(pool_labels(&labels, &sp), Err(Error::Domain(_))));
    }

    fn random_partition(h: usize, w: usize, seeds: &[u32]) -> SuperpixelMap {
        // assign each pixel a raw label from `seeds`, then compact the ids
        let raw: Vec<u32> = (0..h * w).map(|j| seeds[j % seeds.len()]).collect();
        let mut remap = std::collections::BTreeMap::new();
        for &r in &raw {
            let next = remap.len() as u32 + 1;
            remap.entry(r).or_insert(next);
        }
        let ids = raw.iter().map(|r| remap[r]).collect();
        SuperpixelMap::new(h, w, remap.len(), ids).unwrap()
    }

    proptest! {
        #[test]
        fn pooled_labels_recover_piecewise_constant_maps(
            seeds in prop::collection::vec(0u32..6, 1..12),
            classes in prop::collection::vec(0u8..3, 6),
        ) {
            let sp = random_partition(4, 6, &seeds);
            let data: Vec<u8> = (0..24).map(|j| classes[sp.index_of(j) % 6]).collect();
            let labels = LabelMap::new(4, 6, 3, data.clone()).unwrap();
            let table = pool_labels(&labels, &sp).unwrap();
            for j in 0..24 {
                prop_assert_eq!(table.argmax(sp.index_of(j)), data[j]);
            }
            for k in 0..table.num_superpixels() {
                let s: f64 = table.column(k).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
