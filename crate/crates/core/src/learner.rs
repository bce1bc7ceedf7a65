//! Linear hash model trained online by SGD on a tanh-relaxed regression
//! loss against per-label target codes.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lsh::TargetCoder;
use crate::seed;

/// Factor multiplying the residual in the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientFactor {
    /// `1 - tanh(u)^2`, the derivative of tanh.
    #[default]
    TanhDerivative,
    /// `(1 - tanh(u)) * tanh(u)`. Not the derivative of the loss; kept to
    /// reproduce runs made with that formula.
    SigmoidForm,
}

impl GradientFactor {
    fn apply(self, h: f64) -> f64 {
        match self {
            GradientFactor::TanhDerivative => 1.0 - h * h,
            GradientFactor::SigmoidForm => (1.0 - h) * h,
        }
    }
}

/// A batch of instances arriving in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
}

impl TrainBatch {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("a batch needs at least one instance".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::dim("batch features", dim * labels.len(), features.len()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(TrainBatch {
            dim,
            features,
            labels,
        })
    }

    pub fn single(features: Vec<f64>, label: u32) -> Result<Self> {
        let dim = features.len();
        Self::new(dim, features, vec![label])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// Gradient of the batch loss with respect to `W` (row-major `d x r`) and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Hash functions `sgn(W^T x + b)` plus training state.
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    feature_dim: usize,
    code_length: usize,
    /// Row-major `feature_dim x code_length`.
    w: Vec<f64>,
    b: Vec<f64>,
    eta: f64,
    round: u64,
    factor: GradientFactor,
}

impl HashModel {
    /// `W` and `b` drawn i.i.d. standard normal from `seed`.
    pub fn init(feature_dim: usize, code_length: usize, eta: f64, seed: u64) -> Result<Self> {
        if feature_dim == 0 || code_length == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be positive, got d={feature_dim} r={code_length}"
            )));
        }
        let mut rng = seed::rng(seed);
        let w = (0..feature_dim * code_length)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let b = (0..code_length).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::from_parts(feature_dim, code_length, w, b, eta, 0)
    }

    pub fn from_parts(
        feature_dim: usize,
        code_length: usize,
        w: Vec<f64>,
        b: Vec<f64>,
        eta: f64,
        round: u64,
    ) -> Result<Self> {
        if feature_dim == 0 || code_length == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be positive, got d={feature_dim} r={code_length}"
            )));
        }
        if w.len() != feature_dim * code_length {
            return Err(Error::dim("projection matrix", feature_dim * code_length, w.len()));
        }
        if b.len() != code_length {
            return Err(Error::dim("bias vector", code_length, b.len()));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be finite and >= 0, got {eta}")));
        }
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure {
                round,
                detail: "non-finite parameter supplied".into(),
            });
        }
        Ok(HashModel {
            feature_dim,
            code_length,
            w,
            b,
            eta,
            round,
            factor: GradientFactor::default(),
        })
    }

    pub fn with_gradient_factor(mut self, factor: GradientFactor) -> Self {
        self.factor = factor;
        self
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn gradient_factor(&self) -> GradientFactor {
        self.factor
    }

    /// `W^T x + b` for one instance, written into `out`.
    pub fn project_into<T: Copy + Into<f64>>(&self, x: &[T], out: &mut [f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::dim("feature vector", self.feature_dim, x.len()));
        }
        debug_assert_eq!(out.len(), self.code_length);
        out.copy_from_slice(&self.b);
        for (row, &xi) in self.w.chunks_exact(self.code_length).zip(x) {
            let xi: f64 = xi.into();
            if xi == 0.0 {
                continue;
            }
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += wij * xi;
            }
        }
        Ok(())
    }

    pub fn project<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.code_length];
        self.project_into(x, &mut out)?;
        Ok(out)
    }

    /// `tanh(W^T x + b)` for each row of a row-major `n x d` matrix.
    pub fn relaxed_codes(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() % self.feature_dim != 0 {
            return Err(Error::dim("feature matrix", self.feature_dim, features.len() % self.feature_dim));
        }
        let mut out = vec![0.0; features.len() / self.feature_dim * self.code_length];
        for (x, o) in features
            .chunks_exact(self.feature_dim)
            .zip(out.chunks_exact_mut(self.code_length))
        {
            self.project_into(x, o)?;
            o.iter_mut().for_each(|v| *v = v.tanh());
        }
        Ok(out)
    }

    fn check_batch(&self, batch: &TrainBatch, targets: &[f64]) -> Result<()> {
        if batch.dim() != self.feature_dim {
            return Err(Error::dim("batch feature dimension", self.feature_dim, batch.dim()));
        }
        if targets.len() != batch.len() * self.code_length {
            return Err(Error::dim("target matrix", batch.len() * self.code_length, targets.len()));
        }
        Ok(())
    }

    /// Mean over the batch of `||tanh(W^T x + b) - t||^2`.
    pub fn loss(&self, batch: &TrainBatch, targets: &[f64]) -> Result<f64> {
        self.check_batch(batch, targets)?;
        let relaxed = self.relaxed_codes(batch.features())?;
        let total: f64 = relaxed
            .iter()
            .zip(targets)
            .map(|(h, t)| (h - t) * (h - t))
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Per-instance residual terms `(2/n) (h - t) * D(h)`, row-major `n x r`.
    fn residuals(&self, batch: &TrainBatch, targets: &[f64]) -> Result<Vec<f64>> {
        self.check_batch(batch, targets)?;
        let scale = 2.0 / batch.len() as f64;
        let mut g = self.relaxed_codes(batch.features())?;
        for (gv, &t) in g.iter_mut().zip(targets) {
            let h = *gv;
            *gv = scale * (h - t) * self.factor.apply(h);
        }
        Ok(g)
    }

    pub fn gradient(&self, batch: &TrainBatch, targets: &[f64]) -> Result<Gradient> {
        let g = self.residuals(batch, targets)?;
        let r = self.code_length;
        let mut gw = vec![0.0; self.feature_dim * r];
        let mut gb = vec![0.0; r];
        for (i, gi) in g.chunks_exact(r).enumerate() {
            for (acc, &v) in gb.iter_mut().zip(gi) {
                *acc += v;
            }
            for (row, &x) in gw.chunks_exact_mut(r).zip(batch.row(i)) {
                for (acc, &v) in row.iter_mut().zip(gi) {
                    *acc += x * v;
                }
            }
        }
        Ok(Gradient { w: gw, b: gb })
    }

    /// One SGD round. Parameters are left untouched if the update would
    /// produce a non-finite value.
    pub fn sgd_step(&mut self, batch: &TrainBatch, targets: &[f64]) -> Result<()> {
        let g = self.residuals(batch, targets)?;
        let round = self.round + 1;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure {
                round,
                detail: "non-finite gradient".into(),
            });
        }
        let r = self.code_length;
        let eta = self.eta;
        let n = batch.len();

        // W_ij -= eta * sum_k x_ki g_kj, rows with all-zero features skipped.
        let active: Vec<usize> = (0..self.feature_dim)
            .filter(|&i| (0..n).any(|k| batch.row(k)[i] != 0.0))
            .collect();
        let delta = |i: usize, j: usize| -> f64 {
            (0..n).map(|k| batch.row(k)[i] * g[k * r + j]).sum::<f64>()
        };
        let bias_delta = |j: usize| -> f64 { (0..n).map(|k| g[k * r + j]).sum::<f64>() };

        for &i in &active {
            for j in 0..r {
                if !(self.w[i * r + j] - eta * delta(i, j)).is_finite() {
                    return Err(Error::NumericFailure {
                        round,
                        detail: format!("W[{i}][{j}] would become non-finite"),
                    });
                }
            }
        }
        for j in 0..r {
            if !(self.b[j] - eta * bias_delta(j)).is_finite() {
                return Err(Error::NumericFailure {
                    round,
                    detail: format!("b[{j}] would become non-finite"),
                });
            }
        }
        for &i in &active {
            for j in 0..r {
                self.w[i * r + j] -= eta * delta(i, j);
            }
        }
        for j in 0..r {
            self.b[j] -= eta * bias_delta(j);
        }
        self.round = round;
        Ok(())
    }
}

/// A hash model together with the label-to-target machinery that
/// supervises it.
#[derive(Debug, Clone)]
pub struct OnlineHasher {
    model: HashModel,
    coder: TargetCoder,
}

impl OnlineHasher {
    pub fn new(model: HashModel, coder: TargetCoder) -> Result<Self> {
        if model.code_length() != coder.bits() {
            return Err(Error::dim("target code length", model.code_length(), coder.bits()));
        }
        Ok(OnlineHasher { model, coder })
    }

    pub fn model(&self) -> &HashModel {
        &self.model
    }

    pub fn coder(&self) -> &TargetCoder {
        &self.coder
    }

    pub fn into_parts(self) -> (HashModel, TargetCoder) {
        (self.model, self.coder)
    }

    pub fn step(&mut self, batch: &TrainBatch) -> Result<()> {
        let targets = self.coder.targets(batch.labels())?;
        self.model.sgd_step(batch, &targets)
    }

    /// Consumes batches in order. After a batch pushes the instance count
    /// to or past the next milestone, `hook` sees the instance count and
    /// the current model; returns the counts at which it fired.
    pub fn train_stream<I, F>(&mut self, batches: I, milestones: &[usize], mut hook: F) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = TrainBatch>,
        F: FnMut(usize, &HashModel) -> Result<()>,
    {
        if milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("milestones must be strictly increasing".into()));
        }
        let mut seen = 0usize;
        let mut next = 0usize;
        let mut fired = Vec::new();
        for batch in batches {
            self.step(&batch)?;
            seen += batch.len();
            if next < milestones.len() && milestones[next] <= seen {
                while next < milestones.len() && milestones[next] <= seen {
                    next += 1;
                }
                hook(seen, &self.model)?;
                fired.push(seen);
            }
        }
        Ok(fired)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng as _;

    fn zero_model(d: usize, r: usize, eta: f64) -> HashModel {
        HashModel::from_parts(d, r, vec![0.0; d * r], vec![0.0; r], eta, 0).unwrap()
    }

    #[test]
    fn init_is_seeded() {
        let a = HashModel::init(4096, 32, 0.2, 9).unwrap();
        let b = HashModel::init(4096, 32, 0.2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.w().len(), 4096 * 32);
        assert_eq!(a.b().len(), 32);
        assert_eq!(a.round(), 0);
        assert_ne!(a, HashModel::init(4096, 32, 0.2, 10).unwrap());
        assert!(HashModel::init(0, 4, 0.1, 0).is_err());
        assert!(HashModel::init(4, 0, 0.1, 0).is_err());
    }

    #[test]
    fn relaxed_codes_values() {
        let m = zero_model(3, 2, 0.1);
        assert_eq!(m.relaxed_codes(&[1.0, 2.0, 3.0, -4.0, 5.0, 6.0]).unwrap(), vec![0.0; 4]);

        let m = HashModel::from_parts(2, 1, vec![1.0, 0.0], vec![0.0], 0.1, 0).unwrap();
        let out = m.relaxed_codes(&[0.5, 7.0]).unwrap();
        assert_relative_eq!(out[0], 0.462_117_157_260_009_8, epsilon = 1e-15);

        let m = HashModel::init(5, 7, 0.1, 1).unwrap();
        let mut rng = seed::rng(2);
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        assert!(m.relaxed_codes(&x).unwrap().iter().all(|v| v.abs() < 1.0));
        assert!(m.relaxed_codes(&x[..7]).is_err());
    }

    #[test]
    fn loss_values() {
        let m = zero_model(2, 4, 0.1);
        let batch = TrainBatch::single(vec![0.3, -0.1], 0).unwrap();
        let t = [1.0, -1.0, 1.0, 1.0];
        assert_eq!(m.loss(&batch, &t).unwrap(), 4.0);

        let m = HashModel::init(2, 4, 0.1, 3).unwrap();
        let l1 = m.loss(&batch, &t).unwrap();
        let doubled = TrainBatch::new(2, vec![0.3, -0.1, 0.3, -0.1], vec![0, 0]).unwrap();
        let t2: Vec<f64> = t.iter().chain(&t).copied().collect();
        assert_relative_eq!(m.loss(&doubled, &t2).unwrap(), l1, epsilon = 1e-15);
        assert!(l1 >= 0.0);
        assert!(m.loss(&batch, &t[..3]).is_err());
    }

    #[test]
    fn hand_evaluated_step() {
        let mut m = zero_model(1, 1, 0.5);
        let batch = TrainBatch::single(vec![1.0], 0).unwrap();
        let g = m.gradient(&batch, &[1.0]).unwrap();
        assert_eq!(g.w, vec![-2.0]);
        assert_eq!(g.b, vec![-2.0]);
        m.sgd_step(&batch, &[1.0]).unwrap();
        assert_eq!(m.w(), &[1.0]);
        assert_eq!(m.b(), &[1.0]);
        assert_eq!(m.round(), 1);
    }

    #[test]
    fn zero_learning_rate_only_counts() {
        let mut m = HashModel::init(3, 2, 0.0, 4).unwrap();
        let before = m.clone();
        let batch = TrainBatch::single(vec![1.0, 2.0, 3.0], 0).unwrap();
        m.sgd_step(&batch, &[1.0, -1.0]).unwrap();
        assert_eq!(m.w(), before.w());
        assert_eq!(m.b(), before.b());
        assert_eq!(m.round(), 1);
    }

    #[test]
    fn small_step_descends() {
        let mut rng = seed::rng(77);
        for trial in 0..100 {
            let d = rng.random_range(1..=8);
            let r = rng.random_range(1..=8);
            let mut m = HashModel::init(d, r, 1e-4, trial).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..r).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let batch = TrainBatch::single(x, 0).unwrap();
            let before = m.loss(&batch, &t).unwrap();
            m.sgd_step(&batch, &t).unwrap();
            assert!(m.loss(&batch, &t).unwrap() <= before, "trial {trial}");
        }
    }

    #[test]
    fn batch_permutation_invariance() {
        let m = HashModel::init(3, 4, 0.2, 8).unwrap();
        let xs = vec![0.1, 0.2, 0.3, -0.5, 0.0, 0.9, 1.0, -1.0, 0.25];
        let ts = vec![
            1.0, -1.0, 1.0, -1.0, //
            -1.0, -1.0, 1.0, 1.0, //
            1.0, 1.0, 1.0, -1.0,
        ];
        let perm = [2usize, 0, 1];
        let px: Vec<f64> = perm.iter().flat_map(|&i| xs[i * 3..i * 3 + 3].to_vec()).collect();
        let pt: Vec<f64> = perm.iter().flat_map(|&i| ts[i * 4..i * 4 + 4].to_vec()).collect();
        let a = TrainBatch::new(3, xs, vec![0, 1, 2]).unwrap();
        let b = TrainBatch::new(3, px, vec![2, 0, 1]).unwrap();
        let mut ma = m.clone();
        let mut mb = m;
        ma.sgd_step(&a, &ts).unwrap();
        mb.sgd_step(&b, &pt).unwrap();
        for (u, v) in ma.w().iter().zip(mb.w()) {
            assert_relative_eq!(u, v, epsilon = 1e-14);
        }
        for (u, v) in ma.b().iter().zip(mb.b()) {
            assert_relative_eq!(u, v, epsilon = 1e-14);
        }
    }

    #[test]
    fn numeric_guard_keeps_parameters() {
        let mut m = HashModel::from_parts(1, 1, vec![0.0], vec![0.0], 1e308, 0).unwrap();
        let batch = TrainBatch::single(vec![1e10], 0).unwrap();
        let err = m.sgd_step(&batch, &[1.0]).unwrap_err();
        assert!(matches!(err, Error::NumericFailure { round: 1, .. }));
        assert_eq!(m.w(), &[0.0]);
        assert_eq!(m.round(), 0);
    }

    #[test]
    fn batch_validation() {
        assert!(TrainBatch::new(2, vec![], vec![]).is_err());
        assert!(TrainBatch::new(2, vec![1.0], vec![0]).is_err());
        assert!(matches!(
            TrainBatch::new(2, vec![1.0, f64::NAN], vec![0]),
            Err(Error::NonFiniteFeature { row: 0, col: 1 })
        ));
    }

    fn tiny_hasher(seed: u64) -> OnlineHasher {
        let model = HashModel::init(2, 4, 0.2, seed).unwrap();
        let coder = TargetCoder::for_bits(4, 2, seed + 1, seed + 2).unwrap();
        OnlineHasher::new(model, coder).unwrap()
    }

    fn tiny_stream(len: usize) -> Vec<TrainBatch> {
        (0..len)
            .map(|i| TrainBatch::single(vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05], (i % 3) as u32).unwrap())
            .collect()
    }

    #[test]
    fn stream_basics() {
        let mut h = tiny_hasher(1);
        let before = h.model().clone();
        let fired = h.train_stream(Vec::new(), &[1, 2], |_, _| Ok(())).unwrap();
        assert!(fired.is_empty());
        assert_eq!(h.model(), &before);

        let mut seen = Vec::new();
        let fired = h
            .train_stream(tiny_stream(10), &[3, 6, 9], |n, m| {
                seen.push((n, m.round()));
                Ok(())
            })
            .unwrap();
        assert_eq!(fired, vec![3, 6, 9]);
        assert_eq!(seen, vec![(3, 3), (6, 6), (9, 9)]);
        assert_eq!(h.model().round(), 10);
        assert_eq!(h.coder().table().len(), 3);
    }

    #[test]
    fn stream_is_deterministic() {
        let mut a = tiny_hasher(5);
        let mut b = tiny_hasher(5);
        a.train_stream(tiny_stream(50), &[], |_, _| Ok(())).unwrap();
        b.train_stream(tiny_stream(50), &[], |_, _| Ok(())).unwrap();
        assert_eq!(
            a.model().w().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.model().w().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn stream_rejects_unsorted_milestones() {
        let mut h = tiny_hasher(0);
        assert!(h.train_stream(tiny_stream(3), &[2, 2], |_, _| Ok(())).is_err());
    }

    #[test]
    fn stream_surfaces_exhaustion() {
        let mut h = tiny_hasher(0);
        let stream: Vec<_> = (0..5).map(|i| TrainBatch::single(vec![0.1, 0.2], i).unwrap()).collect();
        let err = h.train_stream(stream, &[], |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::CodebookExhausted { label: 4, .. }));
    }
}
