//! Pairwise interaction models: states, clock rates, the update rule and
//! the increment tensor derived from it.
//!
//! States are `0..K` internally. Everything that crosses the API boundary as
//! text (config files, CSV, `Display`) uses the labels `1..=K`.

use std::fmt;

use crate::error::{Error, Result};

pub const MAX_STATES: usize = 255;

/// The update function `G`: ordered pair of states `(initiator, target)` to
/// the states they take after interacting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateRule {
    k: usize,
    table: Vec<(u8, u8)>,
}

impl UpdateRule {
    /// Builds a rule from a closure over 0-based states.
    pub fn from_fn<F>(k: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> (usize, usize),
    {
        check_state_count(k)?;
        let mut table = Vec::with_capacity(k * k);
        for m in 0..k {
            for l in 0..k {
                let (a, b) = f(m, l);
                if a >= k || b >= k {
                    return Err(Error::InvalidModel(format!(
                        "G({}, {}) = ({}, {}) leaves the state space 1..={k}",
                        m + 1,
                        l + 1,
                        a + 1,
                        b + 1
                    )));
                }
                table.push((a as u8, b as u8));
            }
        }
        Ok(Self { k, table })
    }

    /// Builds a rule from 1-based `[m, l, m', l']` rows; every ordered pair
    /// must appear exactly once.
    pub fn from_table(k: usize, rows: &[[usize; 4]]) -> Result<Self> {
        check_state_count(k)?;
        let mut table: Vec<Option<(u8, u8)>> = vec![None; k * k];
        for row in rows {
            if row.iter().any(|&s| s == 0 || s > k) {
                return Err(Error::InvalidModel(format!(
                    "update row {row:?} has a state outside 1..={k}"
                )));
            }
            let slot = &mut table[(row[0] - 1) * k + (row[1] - 1)];
            if slot.is_some() {
                return Err(Error::InvalidModel(format!(
                    "update pair ({}, {}) listed twice",
                    row[0], row[1]
                )));
            }
            *slot = Some(((row[2] - 1) as u8, (row[3] - 1) as u8));
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                e.ok_or_else(|| {
                    Error::InvalidModel(format!(
                        "update table is not total: pair ({}, {}) missing",
                        i / k + 1,
                        i % k + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k, table })
    }

    /// Contact infection with state 1 = infected, state 2 = healthy:
    /// `G(1, 2) = (1, 1)`, every other pair unchanged.
    pub fn sis() -> Self {
        Self::from_fn(2, |m, l| if (m, l) == (0, 1) { (0, 0) } else { (m, l) })
            .expect("sis rule is total")
    }

    /// The initiator imposes its state on the target: `G(m, l) = (m, m)`.
    pub fn voter(k: usize) -> Result<Self> {
        Self::from_fn(k, |m, _| (m, m))
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::from_fn(k, |m, l| (m, l))
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn apply(&self, m: usize, l: usize) -> (usize, usize) {
        let (a, b) = self.table[m * self.k + l];
        (a as usize, b as usize)
    }

    /// 1-based rows, in `(m, l)` lexicographic order.
    pub fn to_table(&self) -> Vec<[usize; 4]> {
        (0..self.k)
            .flat_map(|m| (0..self.k).map(move |l| (m, l)))
            .map(|(m, l)| {
                let (a, b) = self.apply(m, l);
                [m + 1, l + 1, a + 1, b + 1]
            })
            .collect()
    }
}

fn check_state_count(k: usize) -> Result<()> {
    if k == 0 || k > MAX_STATES {
        return Err(Error::InvalidModel(format!(
            "number of states must be in 1..={MAX_STATES}, got {k}"
        )));
    }
    Ok(())
}

/// `c[m][l][k]`: change in the number of state-`k` nodes when an `m` node
/// contacts an `l` node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncrementTensor {
    k: usize,
    data: Vec<i8>,
}

impl IncrementTensor {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            data: vec![0; k * k * k],
        }
    }

    /// Nested `[m][l][k]` values. Used to inject hand-edited tensors; no checks
    /// beyond shape are made here, see [`validate_model`].
    pub fn from_nested(values: &[Vec<Vec<i32>>]) -> Result<Self> {
        let k = values.len();
        check_state_count(k)?;
        let mut t = Self::zeros(k);
        for (m, plane) in values.iter().enumerate() {
            if plane.len() != k {
                return Err(Error::InvalidModel(format!(
                    "increment tensor row {} has {} entries, expected {k}",
                    m + 1,
                    plane.len()
                )));
            }
            for (l, col) in plane.iter().enumerate() {
                if col.len() != k {
                    return Err(Error::InvalidModel(format!(
                        "increment tensor entry ({}, {}) has {} components, expected {k}",
                        m + 1,
                        l + 1,
                        col.len()
                    )));
                }
                for (s, &v) in col.iter().enumerate() {
                    let v = i8::try_from(v).map_err(|_| {
                        Error::InvalidModel(format!("increment {v} does not fit the tensor"))
                    })?;
                    t.set(m, l, s, v);
                }
            }
        }
        Ok(t)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<i32>>> {
        (0..self.k)
            .map(|m| {
                (0..self.k)
                    .map(|l| self.pair(m, l).iter().map(|&v| v as i32).collect())
                    .collect()
            })
            .collect()
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, m: usize, l: usize, s: usize) -> i8 {
        self.data[(m * self.k + l) * self.k + s]
    }

    pub fn set(&mut self, m: usize, l: usize, s: usize, v: i8) {
        self.data[(m * self.k + l) * self.k + s] = v;
    }

    /// All `K` increments for the pair `(m, l)`.
    #[inline]
    pub fn pair(&self, m: usize, l: usize) -> &[i8] {
        let start = (m * self.k + l) * self.k;
        &self.data[start..start + self.k]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}

/// Counts, for each `(m, l, k)`, how many of `G(m, l)`'s outputs equal `k`
/// minus how many of the inputs do.
pub fn derive_increment_tensor<F>(k: usize, mut update: F) -> Result<IncrementTensor>
where
    F: FnMut(usize, usize) -> (usize, usize),
{
    check_state_count(k)?;
    let mut t = IncrementTensor::zeros(k);
    for m in 0..k {
        for l in 0..k {
            let (a, b) = update(m, l);
            if a >= k || b >= k {
                return Err(Error::InvalidModel(format!(
                    "G({}, {}) = ({}, {}) leaves the state space 1..={k}",
                    m + 1,
                    l + 1,
                    a + 1,
                    b + 1
                )));
            }
            for s in 0..k {
                let gained = (a == s) as i8 + (b == s) as i8;
                let lost = (m == s) as i8 + (l == s) as i8;
                t.set(m, l, s, gained - lost);
            }
        }
    }
    for s in 0..k {
        assert!(
            t.get(s, s, s) <= 0,
            "derived increment c_{{kk}}(k) > 0 is impossible"
        );
    }
    Ok(t)
}

/// A complete particle-system specification. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    k: usize,
    gamma: Vec<f64>,
    update: UpdateRule,
    increments: IncrementTensor,
}

impl ModelSpec {
    /// `gamma[m][l]` is the rate of the clock a state-`m` node holds toward
    /// each state-`l` neighbor. Increments are derived from `update`.
    pub fn new(gamma: Vec<Vec<f64>>, update: UpdateRule) -> Result<Self> {
        let k = update.num_states();
        if gamma.len() != k || gamma.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidModel(format!("gamma must be a {k}x{k} matrix")));
        }
        let gamma: Vec<f64> = gamma.into_iter().flatten().collect();
        if let Some(i) = gamma.iter().position(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidModel(format!(
                "gamma[{}][{}] = {} must be a nonnegative finite rate",
                i / k + 1,
                i % k + 1,
                gamma[i]
            )));
        }
        let increments = derive_increment_tensor(k, |m, l| update.apply(m, l))?;
        Ok(Self {
            k,
            gamma,
            update,
            increments,
        })
    }

    /// SIS contact model with infection rate `beta` on `(infected, healthy)` pairs.
    pub fn sis(beta: f64) -> Result<Self> {
        Self::new(vec![vec![0.0, beta], vec![0.0, 0.0]], UpdateRule::sis())
    }

    /// Voter model with every ordered pair of distinct states at rate `rate`.
    pub fn voter(k: usize, rate: f64) -> Result<Self> {
        let gamma = (0..k)
            .map(|m| (0..k).map(|l| if m == l { 0.0 } else { rate }).collect())
            .collect();
        Self::new(gamma, UpdateRule::voter(k)?)
    }

    /// Replaces the derived tensor without any checks. Exists so hand-edited
    /// tensors can be fed to [`validate_model`].
    pub fn with_increments_unchecked(mut self, increments: IncrementTensor) -> Self {
        self.increments = increments;
        self
    }

    /// Same as [`ModelSpec::new`] but keeps an arbitrary (possibly negative)
    /// rate matrix so it can be reported by [`validate_model`].
    pub fn with_gamma_unchecked(mut self, gamma: Vec<Vec<f64>>) -> Self {
        self.gamma = gamma.into_iter().flatten().collect();
        self
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn gamma(&self, m: usize, l: usize) -> f64 {
        self.gamma[m * self.k + l]
    }

    /// Row-major `K*K` rates.
    pub fn gamma_flat(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma_nested(&self) -> Vec<Vec<f64>> {
        self.gamma.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn max_gamma(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }

    pub fn update(&self) -> &UpdateRule {
        &self.update
    }

    pub fn increments(&self) -> &IncrementTensor {
        &self.increments
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    IncrementOutOfRange { m: usize, l: usize, k: usize, value: i8 },
    SelfIncrement { k: usize, value: i8 },
    NotConserving { m: usize, l: usize, sum: i32 },
    NegativeRate { m: usize, l: usize, value: f64 },
    InconsistentWithUpdate { m: usize, l: usize, k: usize, stored: i8, derived: i8 },
    ShapeMismatch { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    // 1-based indices throughout.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::IncrementOutOfRange { m, l, k, value } => write!(
                f,
                "increment range c_{{{}{}}}({}) = {value} outside -2..=2",
                m + 1,
                l + 1,
                k + 1
            ),
            Violation::SelfIncrement { k, value } => write!(
                f,
                "constraint c_kk(k) <= 0 violated: c_{{{0}{0}}}({0}) = {value}",
                k + 1
            ),
            Violation::NotConserving { m, l, sum } => write!(
                f,
                "node conservation violated: sum_k c_{{{}{}}}(k) = {sum}",
                m + 1,
                l + 1
            ),
            Violation::NegativeRate { m, l, value } => write!(
                f,
                "rate nonnegativity violated: gamma[{}][{}] = {value}",
                m + 1,
                l + 1
            ),
            Violation::InconsistentWithUpdate { m, l, k, stored, derived } => write!(
                f,
                "tensor disagrees with update rule at c_{{{}{}}}({}): stored {stored}, derived {derived}",
                m + 1,
                l + 1,
                k + 1
            ),
            Violation::ShapeMismatch { expected, found } => write!(
                f,
                "tensor has {found} states, model has {expected}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_pass() {
            return Ok(());
        }
        let msg = self
            .violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::InvalidModel(msg))
    }
}

/// Checks every model invariant and reports each violation with its indices.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let k = spec.k;
    let mut violations = Vec::new();
    for m in 0..k {
        for l in 0..k {
            let g = spec.gamma(m, l);
            if !(g >= 0.0) || !g.is_finite() {
                violations.push(Violation::NegativeRate { m, l, value: g });
            }
        }
    }
    let c = &spec.increments;
    if c.num_states() != k {
        violations.push(Violation::ShapeMismatch {
            expected: k,
            found: c.num_states(),
        });
        return ValidationReport { violations };
    }
    let derived = derive_increment_tensor(k, |m, l| spec.update.apply(m, l))
        .expect("update rule is total by construction");
    for m in 0..k {
        for l in 0..k {
            let mut sum = 0i32;
            for s in 0..k {
                let v = c.get(m, l, s);
                sum += v as i32;
                if !(-2..=2).contains(&v) {
                    violations.push(Violation::IncrementOutOfRange { m, l, k: s, value: v });
                }
                let d = derived.get(m, l, s);
                if v != d {
                    violations.push(Violation::InconsistentWithUpdate {
                        m,
                        l,
                        k: s,
                        stored: v,
                        derived: d,
                    });
                }
            }
            if sum != 0 {
                violations.push(Violation::NotConserving { m, l, sum });
            }
        }
    }
    for s in 0..k {
        let v = c.get(s, s, s);
        if v > 0 {
            violations.push(Violation::SelfIncrement { k: s, value: v });
        }
    }
    ValidationReport { violations }
}
