//! Overlap-constrained greedy selection of a camera subset that covers the
//! visible scene points.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod oracle;

pub use oracle::selection_oracle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub id: usize,
    /// Position in the capture layout; smaller `y` is higher, smaller `x` is further left.
    pub layout: [f64; 2],
    /// Ids of the scene points this camera sees.
    pub points: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VisibilityData {
    pub cameras: Vec<CameraEntry>,
}

impl VisibilityData {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.cameras {
            if !seen.insert(c.id) {
                return Err(Error::DuplicateEntry(format!("camera {}", c.id)));
            }
            if !c.layout.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("camera {} has a non-finite layout position", c.id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Self = serde_json::from_str(text)?;
        v.validate()?;
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Index of the top-left camera: smallest `(y, x)`, then smallest id.
    pub fn top_left(&self) -> Option<usize> {
        (0..self.cameras.len()).min_by(|&a, &b| {
            let (ca, cb) = (&self.cameras[a], &self.cameras[b]);
            ca.layout[1]
                .total_cmp(&cb.layout[1])
                .then(ca.layout[0].total_cmp(&cb.layout[0]))
                .then(ca.id.cmp(&cb.id))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    /// Minimum overlap between consecutive picks.
    pub o_min: f64,
    /// Target fraction of points covered.
    pub tau: f64,
    /// Bonus weight on overlap with the current camera.
    pub mu: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            o_min: 0.1,
            tau: 0.95,
            mu: 0.05,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.o_min) {
            return Err(Error::Config(format!("o_min = {} must lie in [0, 1]", self.o_min)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau = {} must lie in (0, 1]", self.tau)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu = {} must be non-negative", self.mu)));
        }
        Ok(())
    }
}

/// One greedy pick. The first step is the start camera with score 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub camera: usize,
    pub gain: usize,
    pub overlap: f64,
    pub score: f64,
    /// Covered fraction after this pick.
    pub coverage: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub order: Vec<usize>,
    pub coverage: f64,
    pub steps: Vec<SelectionStep>,
}

impl Selection {
    pub fn table(&self) -> String {
        let mut out = String::from("step  camera  gain  overlap   score     coverage\n");
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                out,
                "{i:>4}  {:>6}  {:>4}  {:>7.4}  {:>8.4}  {:>8.4}",
                s.camera, s.gain, s.overlap, s.score, s.coverage
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Jaccard index of the visible sets of every camera pair.
pub fn overlap_matrix(v: &VisibilityData) -> Vec<Vec<f64>> {
    let sets: Vec<BTreeSet<u64>> = v.cameras.iter().map(|c| c.points.iter().copied().collect()).collect();
    let n = sets.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let inter = sets[i].intersection(&sets[j]).count();
            let union = sets[i].len() + sets[j].len() - inter;
            let o = if union == 0 {
                log::warn!(
                    "cameras {} and {} both see no points; overlap set to 0",
                    v.cameras[i].id,
                    v.cameras[j].id
                );
                0.0
            } else {
                inter as f64 / union as f64
            };
            m[i][j] = o;
            m[j][i] = o;
        }
    }
    m
}

/// Greedy expansion from the top-left camera. At each step the unselected
/// cameras overlapping the current one by at least `o_min` are scored by
/// `new points * (1 + mu * overlap)`; the best (lowest id on ties) becomes
/// current. Stops once coverage reaches `tau`, no candidate remains, or the
/// best candidate adds nothing.
pub fn select_cameras(v: &VisibilityData, p: &SelectionParams) -> Result<Selection> {
    p.validate()?;
    v.validate()?;
    let Some(start) = v.top_left() else {
        return Ok(Selection::default());
    };
    let sets: Vec<BTreeSet<u64>> = v.cameras.iter().map(|c| c.points.iter().copied().collect()).collect();
    let universe: BTreeSet<u64> = sets.iter().flatten().copied().collect();
    let total = universe.len().max(1) as f64;
    let overlap = overlap_matrix(v);

    let mut covered: BTreeSet<u64> = sets[start].clone();
    let mut chosen = vec![false; sets.len()];
    chosen[start] = true;
    let mut sel = Selection {
        order: vec![v.cameras[start].id],
        coverage: covered.len() as f64 / total,
        steps: Vec::new(),
    };
    sel.steps.push(SelectionStep {
        camera: v.cameras[start].id,
        gain: covered.len(),
        overlap: 1.0,
        score: 0.0,
        coverage: sel.coverage,
    });
    let mut cur = start;
    while sel.coverage < p.tau {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in (0..sets.len()).filter(|&j| !chosen[j] && overlap[cur][j] >= p.o_min) {
            let gain = sets[j].difference(&covered).count();
            let score = gain as f64 * (1.0 + p.mu * overlap[cur][j]);
            let better = match best {
                None => true,
                Some((b, _, s)) => score > s || (score == s && v.cameras[j].id < v.cameras[b].id),
            };
            if better {
                best = Some((j, gain, score));
            }
        }
        let Some((j, gain, score)) = best else { break };
        if gain == 0 {
            break;
        }
        covered.extend(sets[j].iter().copied());
        chosen[j] = true;
        sel.coverage = covered.len() as f64 / total;
        sel.order.push(v.cameras[j].id);
        sel.steps.push(SelectionStep {
            camera: v.cameras[j].id,
            gain,
            overlap: overlap[cur][j],
            score,
            coverage: sel.coverage,
        });
        cur = j;
    }
    Ok(sel)
}
