//! The limiting ODE `dy_k/dt = d · yᵀ (Γ ⊙ C(k)) y` and its fixed-step RK4 integrator.

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Tolerance on excursions outside `[0, 1]` and on the simplex sum.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// `f_k(y) = d · Σ_{m,l} γ_{ml} c_{ml}(k) y_m y_l`.
pub fn vector_field(spec: &ModelSpec, d: f64, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; spec.num_states()];
    vector_field_into(spec, d, y, &mut out);
    out
}

fn vector_field_into(spec: &ModelSpec, d: f64, y: &[f64], out: &mut [f64]) {
    let k = spec.num_states();
    out.fill(0.0);
    let c = spec.increments();
    for m in 0..k {
        for l in 0..k {
            let g = spec.gamma(m, l);
            if g == 0.0 {
                continue;
            }
            let w = g * y[m] * y[l];
            for (s, &inc) in c.pair(m, l).iter().enumerate() {
                if inc != 0 {
                    out[s] += inc as f64 * w;
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v *= d;
    }
}

/// Closed-form SIS solution `y0 / (y0 + (1 - y0) e^{-d γ t})`.
pub fn logistic_oracle(y0: f64, d: f64, gamma: f64, t: f64) -> f64 {
    if y0 == 0.0 {
        return 0.0;
    }
    y0 / (y0 + (1.0 - y0) * (-d * gamma * t).exp())
}

/// Sampled ODE solution. Between samples the path is evaluated by cubic
/// Hermite interpolation using the stored field values.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidPath {
    k: usize,
    horizon: f64,
    times: Vec<f64>,
    states: Vec<f64>,
    slopes: Vec<f64>,
}

impl FluidPath {
    /// A path from given samples; slopes at interior samples are central
    /// differences, one-sided at the ends.
    pub fn from_samples(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        let k = states.first().map(Vec::len).unwrap_or(0);
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::InvalidArgument("need one state per sample time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sample times must increase".into()));
        }
        let n = times.len();
        let mut slopes = vec![0.0; n * k];
        if n > 1 {
            for i in 0..n {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                for s in 0..k {
                    slopes[i * k + s] = (states[b][s] - states[a][s]) / (times[b] - times[a]);
                }
            }
        }
        Ok(Self {
            k,
            horizon: *times.last().unwrap(),
            times,
            states: states.into_iter().flatten().collect(),
            slopes,
        })
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.k..(i + 1) * self.k]
    }

    /// Component `s` at arbitrary `t ∈ [0, horizon]`.
    pub fn eval(&self, t: f64, s: usize) -> f64 {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[s];
        }
        if t >= self.horizon {
            return self.states[(n - 1) * self.k + s];
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let u = (t - t0) / h;
        let (y0, y1) = (self.states[i * self.k + s], self.states[(i + 1) * self.k + s]);
        let (m0, m1) = (self.slopes[i * self.k + s], self.slopes[(i + 1) * self.k + s]);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * h * m0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * h * m1
    }
}

/// Classical RK4 with a fixed step; samples at `0, step, 2 step, …` and a
/// final shortened step landing on `horizon` when it is not a multiple.
pub fn integrate(spec: &ModelSpec, d: f64, y0: &[f64], horizon: f64, step: f64) -> Result<FluidPath> {
    let k = spec.num_states();
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be nonnegative, got {horizon}")));
    }
    if y0.len() != k {
        return Err(Error::InvalidArgument(format!(
            "initial condition has {} components, model has {k}",
            y0.len()
        )));
    }
    if y0.iter().any(|&v| !(-BOUNDARY_TOL..=1.0 + BOUNDARY_TOL).contains(&v))
        || (y0.iter().sum::<f64>() - 1.0).abs() > BOUNDARY_TOL
    {
        return Err(Error::InvalidArgument(format!(
            "initial condition {y0:?} is not on the simplex"
        )));
    }

    let full_steps = (horizon / step * (1.0 + 1e-12)).floor() as usize;
    let mut times = Vec::with_capacity(full_steps + 2);
    let mut states = Vec::with_capacity((full_steps + 2) * k);
    let mut slopes = Vec::with_capacity((full_steps + 2) * k);

    let mut y: Vec<f64> = y0.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut f = vec![0.0; k];
    let mut k1 = vec![0.0; k];
    let mut k2 = vec![0.0; k];
    let mut k3 = vec![0.0; k];
    let mut k4 = vec![0.0; k];
    let mut tmp = vec![0.0; k];

    vector_field_into(spec, d, &y, &mut f);
    times.push(0.0);
    states.extend_from_slice(&y);
    slopes.extend_from_slice(&f);

    let mut i = 0usize;
    let mut t = 0.0;
    while t < horizon {
        let next = if i < full_steps {
            (i + 1) as f64 * step
        } else {
            horizon
        };
        if next - t <= horizon * 1e-14 {
            break;
        }
        let h = next - t;
        vector_field_into(spec, d, &y, &mut k1);
        for s in 0..k {
            tmp[s] = y[s] + 0.5 * h * k1[s];
        }
        vector_field_into(spec, d, &tmp, &mut k2);
        for s in 0..k {
            tmp[s] = y[s] + 0.5 * h * k2[s];
        }
        vector_field_into(spec, d, &tmp, &mut k3);
        for s in 0..k {
            tmp[s] = y[s] + h * k3[s];
        }
        vector_field_into(spec, d, &tmp, &mut k4);
        for s in 0..k {
            y[s] += h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
        }
        t = next;
        i += 1;
        if y.iter().any(|&v| !(-BOUNDARY_TOL..=1.0 + BOUNDARY_TOL).contains(&v)) {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("state {y:?} left the unit hypercube"),
            });
        }
        for v in y.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let drift = (y.iter().sum::<f64>() - 1.0).abs();
        if drift > BOUNDARY_TOL {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("simplex sum drifted by {drift:e}"),
            });
        }
        vector_field_into(spec, d, &y, &mut f);
        times.push(t);
        states.extend_from_slice(&y);
        slopes.extend_from_slice(&f);
    }

    Ok(FluidPath {
        k,
        horizon,
        times,
        states,
        slopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UpdateRule;
    use proptest::prelude::*;

    #[test]
    fn sis_field_at_half() {
        let spec = ModelSpec::sis(1.0).unwrap();
        let f = vector_field(&spec, 2.0, &[0.5, 0.5]);
        assert_eq!(f, vec![0.5, -0.5]);
    }

    #[test]
    fn symmetric_voter_field_vanishes() {
        let spec = ModelSpec::voter(3, 0.8).unwrap();
        for y in [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.6, 0.1, 0.3]] {
            for v in vector_field(&spec, 3.0, &y) {
                assert!(v.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn absorbing_vertex() {
        let spec = ModelSpec::sis(1.0).unwrap();
        assert_eq!(vector_field(&spec, 2.0, &[1.0, 0.0]), vec![0.0, 0.0]);
        let path = integrate(&spec, 2.0, &[1.0, 0.0], 5.0, 0.01).unwrap();
        for i in 0..path.len() {
            assert_eq!(path.state(i), &[1.0, 0.0]);
        }
    }

    #[test]
    fn voter_path_is_constant() {
        let spec = ModelSpec::voter(2, 1.0).unwrap();
        let path = integrate(&spec, 2.0, &[0.3, 0.7], 5.0, 0.01).unwrap();
        for i in 0..path.len() {
            assert!((path.state(i)[0] - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_oracle_fixed_points() {
        assert_eq!(logistic_oracle(0.0, 2.0, 1.0, 3.0), 0.0);
        assert_eq!(logistic_oracle(1.0, 2.0, 1.0, 3.0), 1.0);
        // 0.1 / (0.1 + 0.9 e^{-2}) evaluated independently
        assert!((logistic_oracle(0.1, 2.0, 1.0, 1.0) - 0.450853).abs() < 1e-6);
    }

    #[test]
    fn matches_logistic_at_t1() {
        let spec = ModelSpec::sis(1.0).unwrap();
        let path = integrate(&spec, 2.0, &[0.1, 0.9], 1.0, 1e-3).unwrap();
        let last = path.state(path.len() - 1)[0];
        assert!((path.horizon() - 1.0).abs() < 1e-15);
        assert!((last - logistic_oracle(0.1, 2.0, 1.0, 1.0)).abs() < 1e-8);
    }

    #[test]
    fn partial_last_step_lands_on_horizon() {
        let spec = ModelSpec::sis(1.0).unwrap();
        let path = integrate(&spec, 2.0, &[0.1, 0.9], 1.05, 0.1).unwrap();
        assert_eq!(path.len(), 12);
        assert_eq!(*path.times().last().unwrap(), 1.05);
    }

    #[test]
    fn hermite_eval_between_samples() {
        let spec = ModelSpec::sis(1.0).unwrap();
        let path = integrate(&spec, 2.0, &[0.1, 0.9], 10.0, 0.01).unwrap();
        for t in [0.005, 0.333, 1.2345, 4.999] {
            let err = (path.eval(t, 0) - logistic_oracle(0.1, 2.0, 1.0, t)).abs();
            assert!(err < 1e-8, "t = {t}, err = {err}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let spec = ModelSpec::sis(1.0).unwrap();
        assert!(integrate(&spec, 2.0, &[0.1, 0.9], 1.0, 0.0).is_err());
        assert!(integrate(&spec, 2.0, &[0.5, 0.9], 1.0, 0.1).is_err());
        assert!(integrate(&spec, 2.0, &[0.5], 1.0, 0.1).is_err());
    }

    #[test]
    fn invalid_tensor_escapes_hypercube() {
        // c_11(1) = +1 without a matching loss breaks both invariants
        let spec = ModelSpec::sis(1.0).unwrap();
        let mut c = spec.increments().clone();
        c.set(0, 0, 0, 1);
        c.set(0, 1, 0, 1);
        c.set(0, 1, 1, 0);
        let spec = spec
            .with_gamma_unchecked(vec![vec![1.0, 1.0], vec![0.0, 0.0]])
            .with_increments_unchecked(c);
        let err = integrate(&spec, 2.0, &[0.5, 0.5], 10.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }));
    }

    fn arb_model() -> impl Strategy<Value = (ModelSpec, Vec<f64>)> {
        (2usize..=4).prop_flat_map(|k| {
            (
                proptest::collection::vec((0..k, 0..k), k * k),
                proptest::collection::vec(0.0f64..1.0, k * k),
                proptest::collection::vec(0.01f64..1.0, k),
            )
                .prop_map(move |(table, gamma, w)| {
                    let rule = UpdateRule::from_fn(k, |m, l| table[m * k + l]).unwrap();
                    let gamma = gamma.chunks(k).map(|r| r.to_vec()).collect();
                    let spec = ModelSpec::new(gamma, rule).unwrap();
                    let total: f64 = w.iter().sum();
                    (spec, w.into_iter().map(|x| x / total).collect())
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn simplex_and_hypercube_are_invariant((spec, y0) in arb_model()) {
            let path = integrate(&spec, 2.0, &y0, 10.0, 0.01).unwrap();
            for i in 0..path.len() {
                let y = path.state(i);
                prop_assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for &v in y {
                    prop_assert!((-1e-9..=1.0 + 1e-9).contains(&v));
                }
            }
        }

        #[test]
        fn finite_differences_match_field((spec, y0) in arb_model()) {
            let h = 1e-3;
            let path = integrate(&spec, 2.0, &y0, 1.0, h).unwrap();
            for i in [1usize, 100, 500, 998] {
                let f = vector_field(&spec, 2.0, path.state(i));
                for s in 0..spec.num_states() {
                    let fd = (path.state(i + 1)[s] - path.state(i - 1)[s]) / (2.0 * h);
                    // central difference error is O(h²) with bounded derivatives
                    prop_assert!((fd - f[s]).abs() < 1e-4, "fd {} vs f {}", fd, f[s]);
                }
            }
        }
    }
}
