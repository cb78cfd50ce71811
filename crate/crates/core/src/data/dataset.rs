use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::AugmentOp;
use crate::error::ensure;
use crate::{Result, Slice};

#[derive(Debug, Clone, PartialEq)]
pub struct SlicePair {
    pub noisy: Slice,
    pub clean: Slice,
    pub patient_id: String,
    pub slice_index: usize,
}

impl SlicePair {
    pub fn new(noisy: Slice, clean: Slice, patient_id: impl Into<String>, slice_index: usize) -> Result<Self> {
        ensure!(noisy.dim() == clean.dim(), Shape, "noisy {:?} vs clean {:?}", noisy.dim(), clean.dim());
        ensure!(
            noisy.iter().chain(clean.iter()).all(|v| v.is_finite()),
            InvalidArgument,
            "slice pair contains non-finite values"
        );
        Ok(Self {
            noisy,
            clean,
            patient_id: patient_id.into(),
            slice_index,
        })
    }

    /// Same op on both members.
    pub fn augment(&self, op: AugmentOp) -> Self {
        Self {
            noisy: op.apply(&self.noisy),
            clean: op.apply(&self.clean),
            patient_id: self.patient_id.clone(),
            slice_index: self.slice_index,
        }
    }
}

pub fn augment(pair: &SlicePair, op: AugmentOp) -> Result<SlicePair> {
    let (h, w) = pair.noisy.dim();
    ensure!(h == w, Shape, "augmentation needs square slices, got {h}x{w}");
    Ok(pair.augment(op))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Noisy,
    Clean,
    Mask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    pub kind: AccessKind,
    pub patient_id: String,
}

/// Append-only record of image reads and mask constructions.
#[derive(Debug, Default)]
pub struct AccessLog {
    events: Mutex<Vec<Access>>,
}

impl AccessLog {
    pub fn record(&self, kind: AccessKind, patient_id: &str) {
        self.events.lock().expect("access log poisoned").push(Access {
            kind,
            patient_id: patient_id.to_string(),
        });
    }

    pub fn mark(&self) -> usize {
        self.events.lock().expect("access log poisoned").len()
    }

    /// Summary of every event recorded since `mark`.
    pub fn since(&self, mark: usize) -> AuditSummary {
        let ev = self.events.lock().expect("access log poisoned");
        let mut s = AuditSummary::default();
        for a in &ev[mark..] {
            match a.kind {
                AccessKind::Noisy => {
                    s.noisy_reads += 1;
                    s.noisy_patients.insert(a.patient_id.clone());
                }
                AccessKind::Clean => {
                    s.clean_reads += 1;
                    s.clean_patients.insert(a.patient_id.clone());
                }
                AccessKind::Mask => s.masks_built += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditSummary {
    pub noisy_reads: usize,
    pub clean_reads: usize,
    pub masks_built: usize,
    pub noisy_patients: BTreeSet<String>,
    pub clean_patients: BTreeSet<String>,
}

impl AuditSummary {
    pub fn patients(&self) -> BTreeSet<String> {
        self.noisy_patients.union(&self.clean_patients).cloned().collect()
    }
}

/// Read-only collection of slice pairs; every image read is logged.
#[derive(Debug, Clone)]
pub struct Dataset {
    pairs: Arc<Vec<SlicePair>>,
    log: Arc<AccessLog>,
}

impl Dataset {
    pub fn new(pairs: Vec<SlicePair>) -> Result<Self> {
        if let Some(first) = pairs.first() {
            let d = first.noisy.dim();
            ensure!(pairs.iter().all(|p| p.noisy.dim() == d), Shape, "dataset mixes slice sizes");
        }
        Ok(Self {
            pairs: Arc::new(pairs),
            log: Arc::new(AccessLog::default()),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn log(&self) -> &AccessLog {
        &self.log
    }

    pub fn patient(&self, i: usize) -> &str {
        &self.pairs[i].patient_id
    }

    pub fn slice_index(&self, i: usize) -> usize {
        self.pairs[i].slice_index
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.pairs.first().map(|p| p.noisy.dim())
    }

    /// Sorted unique patient ids.
    pub fn patients(&self) -> Vec<String> {
        let s: BTreeSet<&str> = self.pairs.iter().map(|p| p.patient_id.as_str()).collect();
        s.into_iter().map(String::from).collect()
    }

    pub fn indices_of(&self, patients: &[String]) -> Vec<usize> {
        (0..self.len()).filter(|&i| patients.iter().any(|p| *p == self.pairs[i].patient_id)).collect()
    }

    /// Unlogged access for export; training code goes through the pools.
    pub(crate) fn pair_unlogged(&self, i: usize) -> &SlicePair {
        &self.pairs[i]
    }

    pub fn noisy(&self, i: usize) -> &Slice {
        self.log.record(AccessKind::Noisy, &self.pairs[i].patient_id);
        &self.pairs[i].noisy
    }

    pub fn clean(&self, i: usize) -> &Slice {
        self.log.record(AccessKind::Clean, &self.pairs[i].patient_id);
        &self.pairs[i].clean
    }

    pub fn noisy_pool(&self, patients: &[String]) -> NoisyPool {
        NoisyPool {
            ds: self.clone(),
            indices: self.indices_of(patients),
        }
    }

    pub fn paired_pool(&self, patients: &[String]) -> PairedPool {
        PairedPool {
            ds: self.clone(),
            indices: self.indices_of(patients),
        }
    }
}

/// Training view that only exposes noisy images.
#[derive(Debug, Clone)]
pub struct NoisyPool {
    ds: Dataset,
    indices: Vec<usize>,
}

impl NoisyPool {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn noisy(&self, k: usize) -> &Slice {
        self.ds.noisy(self.indices[k])
    }

    pub fn patient(&self, k: usize) -> &str {
        self.ds.patient(self.indices[k])
    }

    pub fn log(&self) -> &AccessLog {
        self.ds.log()
    }
}

/// Training view over noisy/clean pairs.
#[derive(Debug, Clone)]
pub struct PairedPool {
    ds: Dataset,
    indices: Vec<usize>,
}

impl PairedPool {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn noisy(&self, k: usize) -> &Slice {
        self.ds.noisy(self.indices[k])
    }

    pub fn clean(&self, k: usize) -> &Slice {
        self.ds.clean(self.indices[k])
    }

    pub fn slice_index(&self, k: usize) -> usize {
        self.ds.slice_index(self.indices[k])
    }

    pub fn patient(&self, k: usize) -> &str {
        self.ds.patient(self.indices[k])
    }

    pub fn log(&self) -> &AccessLog {
        self.ds.log()
    }

    pub fn patients(&self) -> BTreeSet<String> {
        self.indices.iter().map(|&i| self.ds.patient(i).to_string()).collect()
    }
}

/// Visit order for one epoch; a pure function of `(len, seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> Dataset {
        let pairs = (0..6)
            .map(|i| {
                SlicePair::new(
                    Slice::from_elem((4, 4), i as f64),
                    Slice::from_elem((4, 4), 10.0 + i as f64),
                    format!("P{}", i % 3),
                    i,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(pairs).unwrap()
    }

    #[test]
    fn reads_are_logged_per_kind() {
        let d = ds();
        let m = d.log().mark();
        let pool = d.noisy_pool(&["P1".to_string()]);
        assert_eq!(pool.len(), 2);
        pool.noisy(0);
        pool.noisy(1);
        let s = d.log().since(m);
        assert_eq!((s.noisy_reads, s.clean_reads), (2, 0));
        assert_eq!(s.patients().into_iter().collect::<Vec<_>>(), vec!["P1".to_string()]);
        let pp = d.paired_pool(&["P0".to_string(), "P2".to_string()]);
        pp.clean(3);
        assert_eq!(d.log().since(m).clean_reads, 1);
    }

    #[test]
    fn augment_acts_on_both_members() {
        let p = SlicePair::new(
            Slice::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f64),
            Slice::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f64 * 2.0),
            "A",
            0,
        )
        .unwrap();
        let r = augment(&p, AugmentOp::Rot90).unwrap();
        assert_eq!(r.clean, r.noisy.mapv(|v| v * 2.0));
        let mut a: Vec<f64> = r.noisy.iter().cloned().collect();
        a.sort_by(f64::total_cmp);
        let mut b: Vec<f64> = p.noisy.iter().cloned().collect();
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn epoch_order_is_a_deterministic_permutation() {
        let a = epoch_order(50, 3, 1);
        assert_eq!(a, epoch_order(50, 3, 1));
        assert_ne!(a, epoch_order(50, 3, 2));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn mismatched_pair_rejected() {
        assert!(SlicePair::new(Slice::zeros((2, 2)), Slice::zeros((2, 3)), "x", 0).is_err());
    }
}
