//! Second, deliberately naive implementation of the greedy selection, kept
//! free of shared helpers so the two can be tested against each other.

use super::{Selection, SelectionParams, SelectionStep, VisibilityData};
use crate::error::Result;

fn sorted_unique(xs: &[u64]) -> Vec<u64> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

// Size of the intersection of two sorted lists by merging.
fn common(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            i += 1;
        } else if a[i] > b[j] {
            j += 1;
        } else {
            n += 1;
            i += 1;
            j += 1;
        }
    }
    n
}

fn jaccard(a: &[u64], b: &[u64]) -> f64 {
    let inter = common(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn selection_oracle(v: &VisibilityData, p: &SelectionParams) -> Result<Selection> {
    p.validate()?;
    v.validate()?;
    if v.cameras.is_empty() {
        return Ok(Selection::default());
    }
    let lists: Vec<Vec<u64>> = v.cameras.iter().map(|c| sorted_unique(&c.points)).collect();
    let mut all: Vec<u64> = lists.concat();
    all.sort_unstable();
    all.dedup();
    let denom = if all.is_empty() { 1.0 } else { all.len() as f64 };

    // linear scan for the top-left camera
    let mut start = 0;
    for k in 1..v.cameras.len() {
        let (a, b) = (&v.cameras[k], &v.cameras[start]);
        let key_a = (a.layout[1], a.layout[0]);
        let key_b = (b.layout[1], b.layout[0]);
        if key_a.0 < key_b.0 || (key_a.0 == key_b.0 && (key_a.1 < key_b.1 || (key_a.1 == key_b.1 && a.id < b.id))) {
            start = k;
        }
    }

    let mut have: Vec<u64> = lists[start].clone();
    let mut picked = vec![start];
    let mut steps = vec![SelectionStep {
        camera: v.cameras[start].id,
        gain: have.len(),
        overlap: 1.0,
        score: 0.0,
        coverage: have.len() as f64 / denom,
    }];
    let mut current = start;
    loop {
        let coverage = have.len() as f64 / denom;
        if coverage >= p.tau {
            break;
        }
        let mut best_k = usize::MAX;
        let mut best_gain = 0;
        let mut best_score = f64::NEG_INFINITY;
        let mut best_overlap = 0.0;
        for k in 0..v.cameras.len() {
            if picked.contains(&k) {
                continue;
            }
            let o = jaccard(&lists[current], &lists[k]);
            if o < p.o_min {
                continue;
            }
            let gain = lists[k].len() - common(&lists[k], &have);
            let score = gain as f64 * (1.0 + p.mu * o);
            let wins = best_k == usize::MAX
                || score > best_score
                || (score == best_score && v.cameras[k].id < v.cameras[best_k].id);
            if wins {
                best_k = k;
                best_gain = gain;
                best_score = score;
                best_overlap = o;
            }
        }
        if best_k == usize::MAX || best_gain == 0 {
            break;
        }
        have = sorted_unique(&[have, lists[best_k].clone()].concat());
        picked.push(best_k);
        steps.push(SelectionStep {
            camera: v.cameras[best_k].id,
            gain: best_gain,
            overlap: best_overlap,
            score: best_score,
            coverage: have.len() as f64 / denom,
        });
        current = best_k;
    }
    Ok(Selection {
        order: picked.iter().map(|&k| v.cameras[k].id).collect(),
        coverage: have.len() as f64 / denom,
        steps,
    })
}
