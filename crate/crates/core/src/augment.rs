//! Polarization-driven training-set manipulation: replicate low-polarization
//! instances, delete maximally polarized ones. The test set is never touched.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replication policy: instances with `p >= delete_threshold` are dropped,
/// the rest are copied `max(1, round(factor * (1 - p)))` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub factor: u32,
    pub delete_threshold: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            factor: 3,
            delete_threshold: 1.0,
        }
    }
}

impl AugmentPolicy {
    pub fn new(factor: u32, delete_threshold: f64) -> Result<Self> {
        if factor < 1 {
            return Err(Error::Invalid("replication factor must be >= 1".into()));
        }
        if !(delete_threshold > 0.0 && delete_threshold <= 1.0) {
            return Err(Error::Invalid(format!(
                "delete threshold must lie in (0, 1], got {delete_threshold}"
            )));
        }
        Ok(AugmentPolicy {
            factor,
            delete_threshold,
        })
    }

    /// Copy count for a polarization score; `None` (undefined p) keeps the
    /// instance once.
    pub fn copies(&self, p: Option<f64>) -> usize {
        match p {
            None => 1,
            Some(p) if p >= self.delete_threshold => 0,
            Some(p) => ((self.factor as f64 * (1.0 - p)).round() as usize).max(1),
        }
    }
}

/// A training instance entering augmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainInstance {
    pub item_id: String,
    pub label: String,
    pub text: String,
}

/// An instance with its replication count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedInstance {
    pub item_id: String,
    pub label: String,
    pub text: String,
    pub copies: usize,
}

/// Result of augmentation; `expanded` repeats every instance `copies` times,
/// copies adjacent, original order preserved.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub instances: Vec<AugmentedInstance>,
    pub undefined_p_items: Vec<String>,
}

impl Augmented {
    pub fn expanded(&self) -> Vec<&AugmentedInstance> {
        self.instances
            .iter()
            .flat_map(|inst| std::iter::repeat(inst).take(inst.copies))
            .collect()
    }

    /// Gold CSV with a provenance `copies` column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "item_id,label,copies")?;
        for inst in &self.instances {
            writeln!(w, "{},{},{}", inst.item_id, inst.label, inst.copies)?;
        }
        Ok(())
    }
}

/// Apply the replication policy to a training sequence.
pub fn replicate_by_polarization(
    train: &[TrainInstance],
    p_scores: &BTreeMap<String, f64>,
    policy: &AugmentPolicy,
) -> Augmented {
    let mut instances = Vec::new();
    let mut undefined = Vec::new();
    for inst in train {
        let p = p_scores.get(&inst.item_id).copied();
        if p.is_none() {
            undefined.push(inst.item_id.clone());
        }
        let copies = policy.copies(p);
        if copies > 0 {
            instances.push(AugmentedInstance {
                item_id: inst.item_id.clone(),
                label: inst.label.clone(),
                text: inst.text.clone(),
                copies,
            });
        }
    }
    Augmented {
        instances,
        undefined_p_items: undefined,
    }
}
