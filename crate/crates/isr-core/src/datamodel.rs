//! Multi-environment dataset container and the moment estimators the ISR
//! fitters consume.
//!
//! Fitters never touch raw samples directly; they go through [`MomentSource`],
//! which is implemented both by [`MultiEnvData`] (finite-sample estimators) and
//! by the analytic population-moment providers in [`crate::benchgen`]. That is
//! what lets the same fitting code run in the infinite-sample regime the
//! recovery guarantees are stated in.

use nalgebra::{DMatrix, DVector};

use crate::error::{IsrError, Result};

/// Prediction task attached to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Binary,
    Multiclass(usize),
    Regression,
}

impl TaskKind {
    /// Number of classes for classification tasks, `None` for regression.
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass(k) => Some(*k),
            TaskKind::Regression => None,
        }
    }
}

/// Labels of one environment: class indices for classification, reals for
/// regression.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(v) => v.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples of a single training environment: an `n x d` input matrix plus
/// per-row labels.
#[derive(Debug, Clone)]
pub struct EnvDataset {
    env_id: u32,
    x: DMatrix<f64>,
    y: Labels,
}

impl EnvDataset {
    pub fn new(env_id: u32, x: DMatrix<f64>, y: Labels) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(IsrError::DimensionMismatch(format!(
                "environment {env_id}: {} rows vs {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IsrError::InvalidMatrix(format!(
                "environment {env_id}: non-finite input entry"
            )));
        }
        if let Labels::Values(v) = &y {
            if v.iter().any(|v| !v.is_finite()) {
                return Err(IsrError::InvalidMatrix(format!(
                    "environment {env_id}: non-finite label"
                )));
            }
        }
        Ok(Self { env_id, x, y })
    }

    pub fn env_id(&self) -> u32 {
        self.env_id
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &Labels {
        &self.y
    }
}

/// A group in the worst-group metric: one (label, environment) combination.
/// For regression, `label` is a label bin rather than a class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub label: usize,
    pub env_id: u32,
}

/// Labeled samples partitioned by environment, sharing one input dimension.
#[derive(Debug, Clone)]
pub struct MultiEnvData {
    envs: Vec<EnvDataset>,
    d: usize,
    task: TaskKind,
}

impl MultiEnvData {
    pub fn new(envs: Vec<EnvDataset>, d: usize, task: TaskKind) -> Result<Self> {
        if envs.is_empty() {
            return Err(IsrError::EmptyInput("no environments".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for env in &envs {
            if env.x.ncols() != d {
                return Err(IsrError::DimensionMismatch(format!(
                    "environment {} has {} columns, expected {d}",
                    env.env_id,
                    env.x.ncols()
                )));
            }
            if !seen.insert(env.env_id) {
                return Err(IsrError::InvalidSpec(format!(
                    "duplicate environment id {}",
                    env.env_id
                )));
            }
            match (&env.y, task) {
                (Labels::Classes(ys), TaskKind::Binary) => {
                    if ys.iter().any(|&y| y >= 2) {
                        return Err(IsrError::InvalidSpec(format!(
                            "environment {}: binary label out of range",
                            env.env_id
                        )));
                    }
                }
                (Labels::Classes(ys), TaskKind::Multiclass(k)) => {
                    if ys.iter().any(|&y| y >= k) {
                        return Err(IsrError::InvalidSpec(format!(
                            "environment {}: label out of range [0, {k})",
                            env.env_id
                        )));
                    }
                }
                (Labels::Values(_), TaskKind::Regression) => {}
                _ => {
                    return Err(IsrError::InvalidSpec(format!(
                        "environment {}: label kind does not match task",
                        env.env_id
                    )));
                }
            }
        }
        Ok(Self { envs, d, task })
    }

    pub fn envs(&self) -> &[EnvDataset] {
        &self.envs
    }

    pub fn env(&self, env_id: u32) -> Result<&EnvDataset> {
        self.envs
            .iter()
            .find(|e| e.env_id == env_id)
            .ok_or(IsrError::UnknownEnvironment(env_id))
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn total_len(&self) -> usize {
        self.envs.iter().map(|e| e.len()).sum()
    }

    /// All samples stacked into one matrix, with per-row labels and
    /// environment ids. Row order follows environment order, then sample
    /// order within each environment.
    pub fn stacked(&self) -> (DMatrix<f64>, Labels, Vec<u32>) {
        let n: usize = self.total_len();
        let mut x = DMatrix::zeros(n, self.d);
        let mut env_ids = Vec::with_capacity(n);
        let mut at = 0;
        for env in &self.envs {
            x.view_mut((at, 0), (env.len(), self.d)).copy_from(&env.x);
            env_ids.extend(std::iter::repeat(env.env_id).take(env.len()));
            at += env.len();
        }
        let y = match self.task {
            TaskKind::Regression => {
                let mut v = Vec::with_capacity(n);
                for env in &self.envs {
                    match &env.y {
                        Labels::Values(ys) => v.extend_from_slice(ys),
                        Labels::Classes(_) => unreachable!("validated at construction"),
                    }
                }
                Labels::Values(v)
            }
            _ => {
                let mut v = Vec::with_capacity(n);
                for env in &self.envs {
                    match &env.y {
                        Labels::Classes(ys) => v.extend_from_slice(ys),
                        Labels::Values(_) => unreachable!("validated at construction"),
                    }
                }
                Labels::Classes(v)
            }
        };
        (x, y, env_ids)
    }
}

/// First- and second-moment access, either estimated from samples or analytic.
///
/// All ISR fitters are written against this trait so they run unchanged on
/// finite data and in population (infinite-sample) mode.
pub trait MomentSource {
    fn input_dim(&self) -> usize;
    fn task(&self) -> TaskKind;
    /// Environment ids, in a deterministic order.
    fn env_ids(&self) -> Vec<u32>;
    /// Mean of inputs with the given class label in the given environment.
    fn cond_mean(&self, env_id: u32, label: usize) -> Result<DVector<f64>>;
    /// Covariance (divisor `n`, population convention) of inputs with the
    /// given class label in the given environment.
    fn cond_cov(&self, env_id: u32, label: usize) -> Result<DMatrix<f64>>;
    /// Unconditioned input mean of the given environment.
    fn env_mean(&self, env_id: u32) -> Result<DVector<f64>>;
}

impl MomentSource for MultiEnvData {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn task(&self) -> TaskKind {
        self.task
    }

    fn env_ids(&self) -> Vec<u32> {
        self.envs.iter().map(|e| e.env_id).collect()
    }

    fn cond_mean(&self, env_id: u32, label: usize) -> Result<DVector<f64>> {
        let env = self.env(env_id)?;
        let ys = match &env.y {
            Labels::Classes(ys) => ys,
            Labels::Values(_) => {
                return Err(IsrError::Unsupported(
                    "class-conditional mean of a regression dataset".into(),
                ))
            }
        };
        let mut sum = DVector::zeros(self.d);
        let mut count = 0usize;
        for (i, &y) in ys.iter().enumerate() {
            if y == label {
                sum += env.x.row(i).transpose();
                count += 1;
            }
        }
        if count == 0 {
            return Err(IsrError::EmptyClass { env: env_id, label });
        }
        Ok(sum / count as f64)
    }

    fn cond_cov(&self, env_id: u32, label: usize) -> Result<DMatrix<f64>> {
        let env = self.env(env_id)?;
        let ys = match &env.y {
            Labels::Classes(ys) => ys,
            Labels::Values(_) => {
                return Err(IsrError::Unsupported(
                    "class-conditional covariance of a regression dataset".into(),
                ))
            }
        };
        let rows: Vec<usize> = ys
            .iter()
            .enumerate()
            .filter_map(|(i, &y)| (y == label).then_some(i))
            .collect();
        if rows.len() < 2 {
            return Err(IsrError::InsufficientSamples {
                env: env_id,
                needed: 2,
                got: rows.len(),
            });
        }
        let n = rows.len();
        let mut sub = DMatrix::zeros(n, self.d);
        for (k, &i) in rows.iter().enumerate() {
            sub.row_mut(k).copy_from(&env.x.row(i));
        }
        let mean = sub.row_mean();
        for mut row in sub.row_iter_mut() {
            row -= &mean;
        }
        // divisor n, not n-1: population convention; subspaces are unaffected
        Ok(sub.tr_mul(&sub) / n as f64)
    }

    fn env_mean(&self, env_id: u32) -> Result<DVector<f64>> {
        let env = self.env(env_id)?;
        if env.is_empty() {
            return Err(IsrError::EmptyInput(format!(
                "environment {env_id} has no samples"
            )));
        }
        Ok(env.x.row_mean().transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn binary_env(env_id: u32, rows: &[(Vec<f64>, usize)]) -> EnvDataset {
        let d = rows[0].0.len();
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].0[j]);
        let y = Labels::Classes(rows.iter().map(|r| r.1).collect());
        EnvDataset::new(env_id, x, y).unwrap()
    }

    #[test]
    fn cond_mean_singleton() {
        let data = MultiEnvData::new(
            vec![binary_env(0, &[(vec![3.0, 4.0], 1)])],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let m = data.cond_mean(0, 1).unwrap();
        assert_eq!(m.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn cond_mean_two_points() {
        let data = MultiEnvData::new(
            vec![binary_env(0, &[(vec![1.0, 0.0], 0), (vec![3.0, 0.0], 0)])],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let m = data.cond_mean(0, 0).unwrap();
        assert_eq!(m.as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn cond_mean_empty_class_errors() {
        let data = MultiEnvData::new(
            vec![binary_env(0, &[(vec![1.0, 0.0], 0)])],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        assert!(matches!(
            data.cond_mean(0, 1),
            Err(IsrError::EmptyClass { env: 0, label: 1 })
        ));
        assert!(matches!(
            data.cond_mean(9, 0),
            Err(IsrError::UnknownEnvironment(9))
        ));
    }

    #[test]
    fn cond_mean_concentrates() {
        // 1e5 draws from N(mu, sigma^2 I): each coordinate within 3 sigma/sqrt(n)
        let n = 100_000;
        let sigma = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(n, 2, |_, _| 1.0 + sigma * rng.sample::<f64, _>(StandardNormal));
        let data = MultiEnvData::new(
            vec![EnvDataset::new(0, x, Labels::Classes(vec![1; n])).unwrap()],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let m = data.cond_mean(0, 1).unwrap();
        let bound = 3.0 * sigma / (n as f64).sqrt();
        assert!((m[0] - 1.0).abs() < bound, "{} vs {bound}", (m[0] - 1.0).abs());
        assert!((m[1] - 1.0).abs() < bound);
    }

    #[test]
    fn cond_cov_hand_two_points() {
        let data = MultiEnvData::new(
            vec![binary_env(0, &[(vec![0.0, 0.0], 1), (vec![2.0, 0.0], 1)])],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let c = data.cond_cov(0, 1).unwrap();
        // divisor n = 2
        assert_abs_diff_eq!(c[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(1, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cond_cov_identical_samples_is_zero() {
        let data = MultiEnvData::new(
            vec![binary_env(0, &[(vec![1.0, 2.0], 1), (vec![1.0, 2.0], 1)])],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let c = data.cond_cov(0, 1).unwrap();
        assert!(c.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn cond_cov_needs_two_samples() {
        let data = MultiEnvData::new(
            vec![binary_env(0, &[(vec![1.0, 2.0], 1)])],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        assert!(matches!(
            data.cond_cov(0, 1),
            Err(IsrError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn env_mean_ignores_labels() {
        let data = MultiEnvData::new(
            vec![binary_env(0, &[(vec![1.0, 0.0], 0), (vec![3.0, 2.0], 1)])],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let m = data.env_mean(0).unwrap();
        assert_eq!(m.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn estimators_are_permutation_invariant() {
        let a = MultiEnvData::new(
            vec![binary_env(
                0,
                &[(vec![1.0, 0.5], 1), (vec![-1.0, 2.0], 1), (vec![0.25, 0.0], 1)],
            )],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let b = MultiEnvData::new(
            vec![binary_env(
                0,
                &[(vec![0.25, 0.0], 1), (vec![1.0, 0.5], 1), (vec![-1.0, 2.0], 1)],
            )],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let (ma, mb) = (a.cond_mean(0, 1).unwrap(), b.cond_mean(0, 1).unwrap());
        assert!((ma - mb).amax() < 1e-14);
        let (ca, cb) = (a.cond_cov(0, 1).unwrap(), b.cond_cov(0, 1).unwrap());
        assert!((ca - cb).amax() < 1e-14);
    }

    #[test]
    fn rejects_mismatched_dims_and_duplicate_envs() {
        let e0 = binary_env(0, &[(vec![1.0, 0.0], 0)]);
        let e0b = binary_env(0, &[(vec![1.0, 0.0], 1)]);
        assert!(MultiEnvData::new(vec![e0.clone(), e0b], 2, TaskKind::Binary).is_err());
        assert!(MultiEnvData::new(vec![e0], 3, TaskKind::Binary).is_err());
    }

    #[test]
    fn stacked_preserves_order() {
        let data = MultiEnvData::new(
            vec![
                binary_env(0, &[(vec![1.0, 0.0], 0)]),
                binary_env(1, &[(vec![2.0, 0.0], 1), (vec![3.0, 0.0], 0)]),
            ],
            2,
            TaskKind::Binary,
        )
        .unwrap();
        let (x, y, envs) = data.stacked();
        assert_eq!(x.nrows(), 3);
        assert_eq!(x[(1, 0)], 2.0);
        assert_eq!(envs, vec![0, 1, 1]);
        match y {
            Labels::Classes(v) => assert_eq!(v, vec![0, 1, 0]),
            _ => panic!("expected class labels"),
        }
    }
}
