use crate::scalar::Scalar;

use super::{NnError, ParamStore};

/// Analytic and central-difference derivative at one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Outcome of a finite-difference check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub coordinates: Vec<Coordinate>,
}

impl GradCheck {
    pub fn worst_coordinate(&self) -> Option<&Coordinate> {
        let (name, k) = self.worst.as_ref()?;
        self.coordinates.iter().find(|c| &c.param == name && c.index == *k)
    }
}

/// Compares the gradients stored in `params` against central differences of
/// `f`, coordinate by coordinate.
///
/// The relative error at a coordinate is
/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<T, F>(mut f: F, params: &mut ParamStore<T>, eps: T) -> Result<GradCheck, NnError>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>) -> T,
{
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let two_eps = eps + eps;
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        coordinates: Vec::new(),
    };
    for name in names {
        let len = params.value(&name)?.len();
        for k in 0..len {
            let orig = params.value(&name)?.data()[k];
            params.value_mut(&name)?.data_mut()[k] = orig + eps;
            let plus = f(params);
            params.value_mut(&name)?.data_mut()[k] = orig - eps;
            let minus = f(params);
            params.value_mut(&name)?.data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NnError::NonFinite);
            }
            let numeric = ((plus - minus) / two_eps).as_f64();
            let analytic = params.grad(&name)?.data()[k].as_f64();
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), k));
            }
            report.coordinates.push(Coordinate {
                param: name.clone(),
                index: k,
                analytic,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}
