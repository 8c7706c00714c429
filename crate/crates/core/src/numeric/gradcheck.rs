use super::graph::Graph;
use super::graph::Var;
use super::params::{ParamId, ParamStore};

/// Result of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Denominator floor for the relative error. Below it, comparisons are on an
/// absolute scale: a central difference with step `1e-5` carries truncation
/// error near `1e-10`, which would swamp the ratio for gradients of `1e-7`.
pub const REL_FLOOR: f64 = 1e-5;

/// `(f(θ + h) - f(θ - h)) / 2h` for one scalar of one parameter.
pub fn central_difference(
    store: &mut ParamStore,
    id: ParamId,
    index: usize,
    step: f64,
    f: &mut impl FnMut(&ParamStore) -> f64,
) -> f64 {
    let orig = store.value(id).data()[index];
    store.value_mut(id).data_mut()[index] = orig + step;
    let plus = f(store);
    store.value_mut(id).data_mut()[index] = orig - step;
    let minus = f(store);
    store.value_mut(id).data_mut()[index] = orig;
    (plus - minus) / (2.0 * step)
}

/// Checks every scalar of every parameter. `loss` must build the same
/// computation each time it is called.
pub fn check_gradients(
    store: &mut ParamStore,
    loss: impl Fn(&mut Graph) -> Var,
    step: f64,
) -> GradCheck {
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g);
        g.backward(l)
    };
    let mut eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let l = loss(&mut g);
        g.scalar(l)
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for i in 0..store.value(id).len() {
            let a = analytic.get(id).map_or(0.0, |t| t.data()[i]);
            let n = central_difference(store, id, i, step, &mut eval);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = n;
            }
        }
    }
    report
}
