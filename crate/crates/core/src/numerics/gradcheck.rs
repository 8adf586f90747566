//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used to build the numeric gradient, so this
//! stays independent of the backward rules it validates.

use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Denominator floor for relative error, so that parameters whose true
/// gradient is essentially zero are judged on absolute error instead.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic gradients of `loss_fn` against central differences
/// with step `h` for every scalar of every parameter in `store`.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, loss_fn: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    g.backward(loss, store)?;
    let analytic = store.grads();
    store.zero_grad();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss_fn(&mut g, s)?;
        g.value(l).item()
    };

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).len();
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + h;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig - h;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[id.0].data()[i], numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = format!(
                    "{}[{i}] analytic={:.6e} numeric={:.6e}",
                    store.name(id),
                    analytic[id.0].data()[i],
                    numeric
                );
            }
        }
    }
    Ok(report)
}
