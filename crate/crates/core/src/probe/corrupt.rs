//! Label corruption: random, within-superclass, and towards confusable classes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    /// Flip to any other class.
    Random,
    /// Flip to another class of the same superclass.
    Hierarchical,
    /// Flip to one of the k classes a clean teacher confuses most with the true one.
    Adversarial,
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "hierarchical" => Ok(Self::Hierarchical),
            "adversarial" => Ok(Self::Adversarial),
            other => Err(Error::invalid(format!("unknown corruption kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub level: f64,
    pub k: usize,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, level: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::invalid(format!("corruption level must lie in [0, 1], got {level}")));
        }
        Ok(Self { kind, level, k: 5, seed })
    }
}

/// Extra inputs some corruption kinds need.
#[derive(Debug, Clone, Copy, Default)]
pub struct CorruptionContext<'a> {
    /// Class → superclass id.
    pub superclass: Option<&'a [usize]>,
    /// ν_c: mean clean-teacher probability vector over class-c samples.
    pub confusion: Option<&'a [Vec<f64>]>,
}

/// For each class, the k other classes with largest ν_c entries, ties to the
/// smaller index.
pub fn hard_classes(confusion: &[Vec<f64>], k: usize) -> Result<Vec<Vec<usize>>> {
    let classes = confusion.len();
    if k == 0 || k >= classes {
        return Err(Error::invalid(format!("k must lie in 1..{classes}")));
    }
    confusion
        .iter()
        .enumerate()
        .map(|(c, nu)| {
            if nu.len() != classes {
                return Err(Error::invalid("confusion profile must be C×C"));
            }
            let mut others: Vec<usize> = (0..classes).filter(|&j| j != c).collect();
            others.sort_by(|&a, &b| nu[b].total_cmp(&nu[a]).then(a.cmp(&b)));
            others.truncate(k);
            Ok(others)
        })
        .collect()
}

/// Corrupt each label independently with probability `spec.level`.
pub fn corrupt_labels(
    labels: &[usize],
    classes: usize,
    spec: &CorruptionSpec,
    ctx: CorruptionContext<'_>,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&spec.level) {
        return Err(Error::invalid("corruption level must lie in [0, 1]"));
    }
    if classes < 2 {
        return Err(Error::invalid("corruption needs at least two classes"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    // Candidate replacement classes per true class.
    let targets: Vec<Vec<usize>> = match spec.kind {
        CorruptionKind::Random => (0..classes)
            .map(|c| (0..classes).filter(|&j| j != c).collect())
            .collect(),
        CorruptionKind::Hierarchical => {
            let sup = ctx
                .superclass
                .ok_or_else(|| Error::invalid("hierarchical corruption needs a superclass map"))?;
            if sup.len() != classes {
                return Err(Error::invalid("superclass map must cover every class"));
            }
            let t: Vec<Vec<usize>> = (0..classes)
                .map(|c| (0..classes).filter(|&j| j != c && sup[j] == sup[c]).collect())
                .collect();
            if let Some(c) = t.iter().position(|v| v.is_empty()) {
                if labels.contains(&c) {
                    return Err(Error::invalid(format!(
                        "class {c} is alone in its superclass and has no flip target"
                    )));
                }
            }
            t
        }
        CorruptionKind::Adversarial => {
            let nu = ctx
                .confusion
                .ok_or_else(|| Error::invalid("adversarial corruption needs a confusion profile"))?;
            if nu.len() != classes {
                return Err(Error::invalid("confusion profile must have one row per class"));
            }
            hard_classes(nu, spec.k)?
        }
    };
    let mut rng = stream_rng(spec.seed, stream::CORRUPTION);
    Ok(labels
        .iter()
        .map(|&c| {
            let u: f64 = rng.random();
            if u < spec.level && !targets[c].is_empty() {
                targets[c][rng.random_range(0..targets[c].len())]
            } else {
                c
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: CorruptionKind, level: f64) -> CorruptionSpec {
        CorruptionSpec::new(kind, level, 11).unwrap()
    }

    #[test]
    fn zero_level_is_identity() {
        let labels: Vec<usize> = (0..100).map(|i| i % 7).collect();
        let out = corrupt_labels(&labels, 7, &spec(CorruptionKind::Random, 0.0), Default::default()).unwrap();
        assert_eq!(out, labels);
    }

    #[test]
    fn full_level_binary_flips_everything() {
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let out = corrupt_labels(&labels, 2, &spec(CorruptionKind::Random, 1.0), Default::default()).unwrap();
        assert!(out.iter().zip(&labels).all(|(a, b)| a != b));
    }

    #[test]
    fn hierarchical_stays_in_superclass() {
        let sup = [0, 0, 1, 1, 1];
        let labels: Vec<usize> = (0..500).map(|i| i % 5).collect();
        let ctx = CorruptionContext {
            superclass: Some(&sup),
            confusion: None,
        };
        let out = corrupt_labels(&labels, 5, &spec(CorruptionKind::Hierarchical, 0.7), ctx).unwrap();
        assert!(out.iter().zip(&labels).all(|(&a, &b)| sup[a] == sup[b]));
        assert!(out.iter().zip(&labels).any(|(a, b)| a != b));
    }

    #[test]
    fn hierarchical_errors() {
        let labels = vec![0, 1, 2];
        let missing = corrupt_labels(&labels, 3, &spec(CorruptionKind::Hierarchical, 0.5), Default::default());
        assert!(matches!(missing, Err(Error::InvalidInput(_))));
        let lonely = [0, 0, 1];
        let ctx = CorruptionContext {
            superclass: Some(&lonely),
            confusion: None,
        };
        assert!(corrupt_labels(&labels, 3, &spec(CorruptionKind::Hierarchical, 0.5), ctx).is_err());
    }

    #[test]
    fn adversarial_needs_profile() {
        let r = corrupt_labels(&[0, 1], 3, &spec(CorruptionKind::Adversarial, 0.5), Default::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hard_classes_break_ties_by_index() {
        let nu = vec![
            vec![0.5, 0.2, 0.2, 0.1],
            vec![0.1, 0.6, 0.1, 0.2],
            vec![0.3, 0.3, 0.3, 0.1],
            vec![0.25, 0.25, 0.25, 0.25],
        ];
        let h = hard_classes(&nu, 2).unwrap();
        assert_eq!(h[0], vec![1, 2]);
        assert_eq!(h[1], vec![3, 0]);
        assert_eq!(h[2], vec![0, 1]);
        assert_eq!(h[3], vec![0, 1]);
        assert!(hard_classes(&nu, 4).is_err());
    }

    #[test]
    fn level_is_validated() {
        assert!(CorruptionSpec::new(CorruptionKind::Random, 1.5, 0).is_err());
        assert!("hier".parse::<CorruptionKind>().is_err());
        assert_eq!("adversarial".parse::<CorruptionKind>().unwrap(), CorruptionKind::Adversarial);
    }
}
