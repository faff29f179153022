use super::params::ParamStore;
use crate::error::{Error, Result};

/// One analytic-vs-numeric comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradProbe {
    pub entry: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst: Option<GradProbe>,
    /// Maximum relative error per entry, in store order.
    pub per_entry: Vec<(String, f64)>,
    pub probes: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

// Central differences cannot resolve derivatives whose effect on the
// objective is below its rounding noise (about 1e-16 * |f| / h), so tiny
// derivatives are compared on an absolute scale.
const DENOM_FLOOR: f64 = 1e-6;

pub(crate) fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(DENOM_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compare the gradient `f` accumulates into `store` against central
/// differences `(f(x+h) - f(x-h)) / 2h` for every value of every entry.
///
/// `f` is called with zeroed gradients and must return the scalar objective;
/// only the first call's gradients are used. Values are restored afterwards.
pub fn grad_check<F>(store: &mut ParamStore, h: f64, mut f: F) -> Result<GradReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("grad_check step {h} must be positive")));
    }
    store.zero_grads();
    let f0 = f(store)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteProbe {
            entry: "<base point>".into(),
            index: 0,
        });
    }
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grads(id).to_vec()).collect();

    let mut report = GradReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.entry(id).name().to_string();
        let mut entry_max = 0.0f64;
        for i in 0..store.values(id).len() {
            let x0 = store.values(id)[i];
            let mut eval = |store: &mut ParamStore, x: f64| -> Result<f64> {
                store.values_mut(id)[i] = x;
                store.zero_grads();
                let v = f(store)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteProbe {
                        entry: name.clone(),
                        index: i,
                    })
                }
            };
            let fp = eval(store, x0 + h);
            let fm = fp.and_then(|fp| eval(store, x0 - h).map(|fm| (fp, fm)));
            store.values_mut(id)[i] = x0;
            let (fp, fm) = fm?;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[id.index()][i];
            let e = rel_err(a, numeric);
            report.probes += 1;
            entry_max = entry_max.max(e);
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = Some(GradProbe {
                    entry: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_err: e,
                });
            }
        }
        report.per_entry.push((name, entry_max));
    }
    // leave the analytic gradient in place for the caller
    store.zero_grads();
    for id in store.ids().collect::<Vec<_>>() {
        store.grads_mut(id).copy_from_slice(&analytic[id.index()]);
    }
    Ok(report)
}

/// [`grad_check`] for a plain function of a vector returning `(value, gradient)`.
pub fn grad_check_fn<F>(x: &[f64], h: f64, mut f: F) -> Result<GradReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut store = ParamStore::new();
    let id = store.insert("x", x.to_vec())?;
    grad_check(&mut store, h, |s| {
        let (v, g) = f(s.values(id))?;
        if g.len() != s.values(id).len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient length {} != parameter length {}",
                g.len(),
                s.values(id).len()
            )));
        }
        s.grads_mut(id).copy_from_slice(&g);
        Ok(v)
    })
}
