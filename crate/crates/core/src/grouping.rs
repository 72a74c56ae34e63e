//! Assignment of samples to fixed-width ensembles and the iteration-inflation
//! ratio `R` that scores an assignment.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grouping strategy tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Generation order.
    Nat,
    /// Sorted by the anisotropy indicator `H`.
    Par,
    /// Sorted by the iterations surrogate.
    Sur,
    /// Sorted by measured iterations, after the fact.
    Its,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Nat, Strategy::Par, Strategy::Sur, Strategy::Its];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Nat => "nat",
            Strategy::Par => "par",
            Strategy::Sur => "sur",
            Strategy::Its => "its",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nat" => Ok(Strategy::Nat),
            "par" => Ok(Strategy::Par),
            "sur" => Ok(Strategy::Sur),
            "its" => Ok(Strategy::Its),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Partition of one level's samples into ensembles of exactly `S` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingPlan {
    pub level: usize,
    pub strategy: Strategy,
    pub ensemble_size: usize,
    /// Sample ids per slot; padding slots repeat the last real sample.
    pub ensembles: Vec<Vec<usize>>,
    /// Number of padding slots per ensemble.
    pub padding: Vec<usize>,
}

impl GroupingPlan {
    pub fn n_ensembles(&self) -> usize {
        self.ensembles.len()
    }

    /// Real (non-padding) sample count.
    pub fn n_samples(&self) -> usize {
        self.ensembles.len() * self.ensemble_size - self.padding.iter().sum::<usize>()
    }

    /// Iteration count per slot, looked up by sample id.
    pub fn slot_values(&self, values: &HashMap<usize, f64>) -> Result<Vec<Vec<f64>>> {
        self.ensembles
            .iter()
            .map(|g| {
                g.iter()
                    .map(|id| {
                        values.get(id).copied().ok_or_else(|| {
                            Error::IncompleteData(format!("no iteration count for sample {id}"))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

fn chunk(level: usize, strategy: Strategy, ordered: Vec<usize>, s: usize) -> Result<GroupingPlan> {
    if s == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    let Some(&last) = ordered.last() else {
        return Err(Error::Domain(format!(
            "level {level} has no samples to group"
        )));
    };
    let mut ensembles: Vec<Vec<usize>> = ordered.chunks(s).map(<[usize]>::to_vec).collect();
    let mut padding = vec![0; ensembles.len()];
    let tail = ensembles.last_mut().expect("non-empty");
    let missing = s - tail.len();
    tail.resize(s, last);
    *padding.last_mut().expect("non-empty") = missing;
    Ok(GroupingPlan {
        level,
        strategy,
        ensemble_size: s,
        ensembles,
        padding,
    })
}

/// Consecutive chunks in generation order.
pub fn group_natural(
    level: usize,
    strategy: Strategy,
    ids: &[usize],
    s: usize,
) -> Result<GroupingPlan> {
    chunk(level, strategy, ids.to_vec(), s)
}

/// Stable ascending sort by `key`, then consecutive chunks.
pub fn group_by_key(
    level: usize,
    strategy: Strategy,
    ids: &[usize],
    key: &HashMap<usize, f64>,
    s: usize,
) -> Result<GroupingPlan> {
    let mut keyed = Vec::with_capacity(ids.len());
    for &id in ids {
        let k = key
            .get(&id)
            .ok_or_else(|| Error::Config(format!("no grouping key for sample {id}")))?;
        keyed.push((*k, id));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    chunk(
        level,
        strategy,
        keyed.into_iter().map(|(_, id)| id).collect(),
        s,
    )
}

/// Per-level and overall inflation ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSummary {
    /// `None` for levels without ensembles.
    pub per_level: Vec<Option<f64>>,
    pub total: f64,
    pub notes: Vec<String>,
}

/// Work of one level: `(sum of group maxima, sum of all slots)`.
fn level_work(slots: &[Vec<f64>]) -> (f64, f64) {
    slots.iter().fold((0.0, 0.0), |(mx, tot), g| {
        (
            mx + g.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            tot + g.iter().sum::<f64>(),
        )
    })
}

/// `R_l = S sum_k max_i I_{k,i} / sum_k sum_i I_{k,i}` per level and the same
/// ratio over all levels. Padding slots count in both sums.
pub fn compute_r(levels: &[(&GroupingPlan, &[Vec<f64>])]) -> Result<RSummary> {
    let mut per_level = Vec::with_capacity(levels.len());
    let mut notes = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (plan, slots) in levels {
        if slots.len() != plan.ensembles.len()
            || slots.iter().any(|g| g.len() != plan.ensemble_size)
        {
            return Err(Error::IncompleteData(format!(
                "level {} needs {} values per ensemble",
                plan.level, plan.ensemble_size
            )));
        }
        if slots.is_empty() {
            notes.push(format!("level {} has no ensembles; skipped", plan.level));
            per_level.push(None);
            continue;
        }
        let s = plan.ensemble_size as f64;
        let (mx, tot) = level_work(slots);
        per_level.push(Some(s * mx / tot));
        num += s * mx;
        den += tot;
    }
    if den == 0.0 {
        return Err(Error::IncompleteData("no iteration work recorded".into()));
    }
    Ok(RSummary {
        per_level,
        total: num / den,
        notes,
    })
}

/// Measured ensemble speed-up per ensemble size, as supplied by the user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseCurve(pub BTreeMap<usize, f64>);

impl BaseCurve {
    /// Two-column CSV `S,speedup`; a non-numeric first row is a header.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut map = BTreeMap::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Config(format!(
                    "base curve row {} needs 2 columns",
                    row + 1
                )));
            }
            match (rec[0].parse::<usize>(), rec[1].parse::<f64>()) {
                (Ok(s), Ok(v)) if v > 0.0 => {
                    map.insert(s, v);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::Config(format!(
                        "base curve row {} is not `S,speedup`: {:?}",
                        row + 1,
                        rec
                    )))
                }
            }
        }
        Ok(BaseCurve(map))
    }
}

/// `base_curve(S) / R`.
pub fn predicted_speedup(r: f64, s: usize, base_curve: &BaseCurve) -> Result<f64> {
    let base = base_curve
        .0
        .get(&s)
        .ok_or_else(|| Error::Config(format!("base curve has no entry for S = {s}")))?;
    Ok(base / r)
}
