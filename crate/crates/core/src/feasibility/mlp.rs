//! The feasibility classifier: a fully connected 32-100-100-100-1 network
//! with ReLU hidden units and a sigmoid output, trained on binary
//! cross-entropy with Adam. Everything is deterministic given the seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use super::{FeasibilityError, FeatureVector, LabeledExample, FEATURE_DIM};

const MODEL_MAGIC: &[u8; 4] = b"LMNN";
const MODEL_VERSION: u32 = 1;

/// Keep classifier outputs strictly inside (0, 1) even when the sigmoid
/// saturates in f64.
const SCORE_GUARD: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Layer {
    /// out x in weight matrix.
    w: DMatrix<f64>,
    b: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct MlpModel {
    layers: Vec<Layer>,
    sizes: Vec<usize>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    pub const HIDDEN: usize = 100;

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// He-initialized random network with the standard layer sizes.
    pub fn new_random(seed: u64) -> Self {
        Self::random_with_sizes(&[FEATURE_DIM, Self::HIDDEN, Self::HIDDEN, Self::HIDDEN, 1], seed)
    }

    pub fn random_with_sizes(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let (nin, nout) = (w[0], w[1]);
            let scale = (2.0 / nin as f64).sqrt();
            let wmat = DMatrix::from_fn(nout, nin, |_, _| {
                // Box-Muller from two uniforms keeps the stream simple.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                scale * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            });
            layers.push(Layer { w: wmat, b: DVector::zeros(nout) });
        }
        Self { layers, sizes: sizes.to_vec() }
    }

    /// All-zero network; outputs exactly sigmoid(0) = 0.5.
    pub fn zeros() -> Self {
        let sizes = vec![FEATURE_DIM, Self::HIDDEN, Self::HIDDEN, Self::HIDDEN, 1];
        let layers = sizes
            .windows(2)
            .map(|w| Layer { w: DMatrix::zeros(w[1], w[0]), b: DVector::zeros(w[1]) })
            .collect();
        Self { layers, sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    /// Deterministic feed-forward pass; output strictly in (0, 1).
    pub fn forward(&self, x: &FeatureVector) -> f64 {
        assert_eq!(self.input_dim(), FEATURE_DIM, "model input dimension");
        let mut a = DVector::from_row_slice(x.as_slice());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * &a + &layer.b;
            if i + 1 < self.layers.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        sigmoid(a[0]).clamp(SCORE_GUARD, 1.0 - SCORE_GUARD)
    }

    /// Batched forward pass over rows of `x` (n x input_dim). Returns the
    /// pre-sigmoid logits and the layer activations for backprop.
    fn forward_batch(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut activations = vec![x.clone()];
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &a * layer.w.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.b.transpose();
            }
            if i + 1 < self.layers.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z.clone();
            activations.push(z);
        }
        let logits = DVector::from_iterator(a.nrows(), a.column(0).iter().copied());
        (activations, logits)
    }

    /// Scores for a batch of examples.
    pub fn score_batch(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let (_, logits) = self.forward_batch(x);
        logits.map(|z| sigmoid(z).clamp(SCORE_GUARD, 1.0 - SCORE_GUARD))
    }

    /// Mean binary cross-entropy and parameter gradients on a batch.
    /// Returns (loss, per-layer (dW, db)).
    pub fn loss_and_gradients(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> (f64, Vec<(DMatrix<f64>, DVector<f64>)>) {
        let n = x.nrows() as f64;
        let (activations, logits) = self.forward_batch(x);
        // Stable BCE: max(z,0) - z*y + ln(1 + exp(-|z|)).
        let loss = logits
            .iter()
            .zip(y.iter())
            .map(|(&z, &yy)| z.max(0.0) - z * yy + (1.0 + (-z.abs()).exp()).ln())
            .sum::<f64>()
            / n;

        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = self
            .layers
            .iter()
            .map(|l| (DMatrix::zeros(l.w.nrows(), l.w.ncols()), DVector::zeros(l.b.len())))
            .collect();

        // dL/dz_out = (sigmoid(z) - y) / n, shape n x 1.
        let mut delta = DMatrix::from_fn(x.nrows(), 1, |r, _| (sigmoid(logits[r]) - y[r]) / n);
        for li in (0..self.layers.len()).rev() {
            let a_prev = &activations[li];
            grads[li].0 = delta.transpose() * a_prev;
            grads[li].1 = DVector::from_iterator(delta.ncols(), delta.row_sum().iter().copied());
            if li > 0 {
                let mut next = &delta * &self.layers[li].w;
                // ReLU mask of the previous layer's activations.
                for r in 0..next.nrows() {
                    for c in 0..next.ncols() {
                        if activations[li][(r, c)] <= 0.0 {
                            next[(r, c)] = 0.0;
                        }
                    }
                }
                delta = next;
            }
        }
        (loss, grads)
    }

    /// Flattened view of all parameters for gradient checking.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.w.len() {
                return l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w[idx] = value;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = value;
                return;
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn gradient_at(&self, grads: &[(DMatrix<f64>, DVector<f64>)], mut idx: usize) -> f64 {
        for g in grads {
            if idx < g.0.len() {
                return g.0[idx];
            }
            idx -= g.0.len();
            if idx < g.1.len() {
                return g.1[idx];
            }
            idx -= g.1.len();
        }
        panic!("parameter index out of range");
    }

    /// Versioned binary serialization: magic, version, layer sizes, then
    /// row-major weights and biases as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<(), FeasibilityError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            buf.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for l in &self.layers {
            for r in 0..l.w.nrows() {
                for c in 0..l.w.ncols() {
                    buf.extend_from_slice(&l.w[(r, c)].to_le_bytes());
                }
            }
            for v in l.b.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FeasibilityError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8], FeasibilityError> {
            if *off + n > bytes.len() {
                return Err(FeasibilityError::ModelFile("truncated model file".into()));
            }
            let s = &bytes[*off..*off + n];
            *off += n;
            Ok(s)
        };
        if take(&mut off, 4)? != MODEL_MAGIC {
            return Err(FeasibilityError::ModelFile("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(FeasibilityError::ModelFile(format!("unsupported version {version}")));
        }
        let n_sizes = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize);
        }
        if sizes.len() < 2 {
            return Err(FeasibilityError::ModelFile("needs at least two layer sizes".into()));
        }
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let (nin, nout) = (w[0], w[1]);
            let mut wmat = DMatrix::zeros(nout, nin);
            for r in 0..nout {
                for c in 0..nin {
                    wmat[(r, c)] =
                        f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
                }
            }
            let mut b = DVector::zeros(nout);
            for r in 0..nout {
                b[r] = f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
            }
            layers.push(Layer { w: wmat, b });
        }
        if off != bytes.len() {
            return Err(FeasibilityError::ModelFile("trailing bytes".into()));
        }
        Ok(Self { layers, sizes })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 12,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainMetrics {
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub validation_auc: f64,
    pub train_count: usize,
    pub validation_count: usize,
}

impl TrainMetrics {
    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str("# epoch loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{} {:.6}\n", i + 1, l));
        }
        out.push_str(&format!("train_count {}\n", self.train_count));
        out.push_str(&format!("validation_count {}\n", self.validation_count));
        out.push_str(&format!("train_accuracy {:.6}\n", self.train_accuracy));
        out.push_str(&format!("validation_accuracy {:.6}\n", self.validation_accuracy));
        out.push_str(&format!("validation_auc {:.6}\n", self.validation_auc));
        out
    }
}

/// Area under the ROC curve by rank statistic with tie correction.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg_rank;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return f64::NAN;
    }
    let pos_rank_sum: f64 =
        ranks.iter().zip(labels.iter()).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

fn to_matrix(examples: &[&LabeledExample]) -> (DMatrix<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(examples.len(), FEATURE_DIM, |r, c| examples[r].features.0[c]);
    let y = DVector::from_fn(examples.len(), |r, _| if examples[r].label { 1.0 } else { 0.0 });
    (x, y)
}

/// Train the classifier. Deterministic given the settings seed; errors on a
/// single-class dataset.
pub fn train(
    dataset: &[LabeledExample],
    settings: &TrainSettings,
) -> Result<(MlpModel, TrainMetrics), FeasibilityError> {
    if dataset.is_empty() {
        return Err(FeasibilityError::Training("empty dataset".into()));
    }
    let n_pos = dataset.iter().filter(|e| e.label).count();
    if n_pos == 0 || n_pos == dataset.len() {
        return Err(FeasibilityError::Training(
            "dataset contains a single class; both labels are required".into(),
        ));
    }
    if !(0.0..1.0).contains(&settings.validation_fraction) || settings.validation_fraction <= 0.0 {
        return Err(FeasibilityError::Training("validation fraction must be in (0, 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    shuffle(&mut indices, &mut rng);
    let n_val = ((dataset.len() as f64 * settings.validation_fraction).round() as usize)
        .clamp(1, dataset.len() - 1);
    let (val_idx, train_idx) = indices.split_at(n_val);
    let train_refs: Vec<&LabeledExample> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let val_refs: Vec<&LabeledExample> = val_idx.iter().map(|&i| &dataset[i]).collect();

    let mut model = MlpModel::new_random(settings.seed.wrapping_add(1));
    let mut adam = Adam::new(&model, settings.learning_rate);

    let mut order: Vec<usize> = (0..train_refs.len()).collect();
    let mut metrics = TrainMetrics {
        train_count: train_refs.len(),
        validation_count: val_refs.len(),
        ..TrainMetrics::default()
    };
    for _ in 0..settings.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0_f64;
        for chunk in order.chunks(settings.batch_size.max(1)) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| train_refs[i]).collect();
            let (x, y) = to_matrix(&batch);
            let (loss, grads) = model.loss_and_gradients(&x, &y);
            adam.step(&mut model, &grads);
            epoch_loss += loss;
            batches += 1.0;
        }
        metrics.epoch_losses.push(epoch_loss / batches.max(1.0));
    }

    let accuracy = |refs: &[&LabeledExample]| -> f64 {
        let (x, _) = to_matrix(refs);
        let scores = model.score_batch(&x);
        let correct = refs
            .iter()
            .zip(scores.iter())
            .filter(|(e, &s)| (s > 0.5) == e.label)
            .count();
        correct as f64 / refs.len() as f64
    };
    metrics.train_accuracy = accuracy(&train_refs);
    metrics.validation_accuracy = accuracy(&val_refs);
    let (xv, _) = to_matrix(&val_refs);
    let scores = model.score_batch(&xv);
    let labels: Vec<bool> = val_refs.iter().map(|e| e.label).collect();
    metrics.validation_auc = roc_auc(scores.as_slice(), &labels);
    Ok((model, metrics))
}

fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<(DMatrix<f64>, DVector<f64>)>,
    v: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl Adam {
    fn new(model: &MlpModel, lr: f64) -> Self {
        let zeros: Vec<(DMatrix<f64>, DVector<f64>)> = model
            .layers
            .iter()
            .map(|l| (DMatrix::zeros(l.w.nrows(), l.w.ncols()), DVector::zeros(l.b.len())))
            .collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &[(DMatrix<f64>, DVector<f64>)]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[li];
            let (mw, mb) = &mut self.m[li];
            let (vw, vb) = &mut self.v[li];
            for i in 0..gw.len() {
                mw[i] = self.beta1 * mw[i] + (1.0 - self.beta1) * gw[i];
                vw[i] = self.beta2 * vw[i] + (1.0 - self.beta2) * gw[i] * gw[i];
                layer.w[i] -= self.lr * (mw[i] / bc1) / ((vw[i] / bc2).sqrt() + self.eps);
            }
            for i in 0..gb.len() {
                mb[i] = self.beta1 * mb[i] + (1.0 - self.beta1) * gb[i];
                vb[i] = self.beta2 * vb[i] + (1.0 - self.beta2) * gb[i] * gb[i];
                layer.b[i] -= self.lr * (mb[i] / bc1) / ((vb[i] / bc2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manipulation::ManipulationType;
    use crate::Side;

    fn example(features: [f64; FEATURE_DIM], label: bool) -> LabeledExample {
        LabeledExample {
            features: FeatureVector(features),
            label,
            swing: Side::Left,
            manipulation_type: ManipulationType::RightHand,
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let model = MlpModel::zeros();
        let f = FeatureVector([0.3; FEATURE_DIM]);
        assert_eq!(model.forward(&f), 0.5);
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let model = MlpModel::new_random(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut f = [0.0; FEATURE_DIM];
            for v in f.iter_mut() {
                *v = rng.gen_range(-100.0..100.0);
            }
            let s = model.forward(&FeatureVector(f));
            assert!(s > 0.0 && s < 1.0, "score {s}");
        }
    }

    #[test]
    fn hand_constructed_single_unit_matches_sigmoid() {
        // One layer, weights arranged so the pre-activation equals 2.
        let mut model = MlpModel::random_with_sizes(&[FEATURE_DIM, 1], 0);
        for i in 0..model.param_count() {
            model.set_param(i, 0.0);
        }
        // bias of the single unit is the last parameter.
        model.set_param(model.param_count() - 1, 2.0);
        let f = FeatureVector([0.0; FEATURE_DIM]);
        let v: f64 = model.forward(&f);
        assert!((v - 0.8807970779778823).abs() < 1e-6, "sigmoid(2) = {v}");
    }

    #[test]
    fn forward_is_deterministic() {
        let model = MlpModel::new_random(5);
        let f = FeatureVector([0.17; FEATURE_DIM]);
        let a = model.forward(&f);
        let b = model.forward(&f);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut model = MlpModel::random_with_sizes(&[FEATURE_DIM, 20, 20, 1], 11);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut examples = Vec::new();
        for i in 0..5 {
            let mut f = [0.0; FEATURE_DIM];
            for v in f.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            examples.push(example(f, i % 2 == 0));
        }
        let refs: Vec<&LabeledExample> = examples.iter().collect();
        let (x, y) = to_matrix(&refs);
        let (_, grads) = model.loss_and_gradients(&x, &y);
        // Sample a deterministic spread of parameters across all layers.
        let n = model.param_count();
        let h = 1e-6;
        let mut checked = 0;
        let mut max_rel: f64 = 0.0;
        for k in 0..200 {
            let idx = (k * 7919) % n;
            let orig = model.get_param(idx);
            model.set_param(idx, orig + h);
            let (lp, _) = model.loss_and_gradients(&x, &y);
            model.set_param(idx, orig - h);
            let (lm, _) = model.loss_and_gradients(&x, &y);
            model.set_param(idx, orig);
            let fd = (lp - lm) / (2.0 * h);
            let an = model.gradient_at(&grads, idx);
            let denom = fd.abs().max(an.abs()).max(1e-8);
            max_rel = max_rel.max((fd - an).abs() / denom);
            checked += 1;
        }
        assert!(checked > 0);
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut data = Vec::new();
        for i in 0..2000 {
            let label = i % 2 == 0;
            let center = if label { 0.8 } else { -0.8 };
            let mut f = [0.0; FEATURE_DIM];
            for v in f.iter_mut() {
                *v = center + rng.gen_range(-0.5..0.5);
            }
            data.push(example(f, label));
        }
        let settings = TrainSettings { epochs: 8, ..TrainSettings::default() };
        let (_, metrics) = train(&data, &settings).unwrap();
        assert!(metrics.validation_accuracy >= 0.99, "val acc {}", metrics.validation_accuracy);
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut data = Vec::new();
        for i in 0..1200 {
            let label = i % 3 != 0;
            let mut f = [0.0; FEATURE_DIM];
            for (j, v) in f.iter_mut().enumerate() {
                *v = rng.gen_range(-1.0..1.0) + if label && j < 8 { 0.4 } else { 0.0 };
            }
            data.push(example(f, label));
        }
        let settings = TrainSettings { epochs: 5, ..TrainSettings::default() };
        let (_, metrics) = train(&data, &settings).unwrap();
        assert!(metrics.epoch_losses.len() == 5);
        assert!(
            metrics.epoch_losses[4] < metrics.epoch_losses[0],
            "losses {:?}",
            metrics.epoch_losses
        );
    }

    #[test]
    fn single_class_dataset_is_rejected() {
        let data: Vec<LabeledExample> =
            (0..10).map(|_| example([0.1; FEATURE_DIM], true)).collect();
        assert!(train(&data, &TrainSettings::default()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut data = Vec::new();
        for i in 0..400 {
            let mut f = [0.0; FEATURE_DIM];
            for v in f.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            data.push(example(f, i % 2 == 0));
        }
        let settings = TrainSettings { epochs: 3, ..TrainSettings::default() };
        let (m1, _) = train(&data, &settings).unwrap();
        let (m2, _) = train(&data, &settings).unwrap();
        let f = FeatureVector([0.2; FEATURE_DIM]);
        assert_eq!(m1.forward(&f).to_bits(), m2.forward(&f).to_bits());
    }

    #[test]
    fn save_load_round_trip() {
        let model = MlpModel::new_random(7);
        let dir = std::env::temp_dir().join("locomanip_mlp_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.bin");
        model.save(&path).unwrap();
        let loaded = MlpModel::load(&path).unwrap();
        let f = FeatureVector([0.05; FEATURE_DIM]);
        assert_eq!(model.forward(&f).to_bits(), loaded.forward(&f).to_bits());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn auc_of_perfect_separation_is_one() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [false, false, true, true];
        assert_eq!(roc_auc(&scores, &labels), 1.0);
        let labels_rev = [true, true, false, false];
        assert_eq!(roc_auc(&scores, &labels_rev), 0.0);
        // Ties average to 0.5.
        let tied = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(roc_auc(&tied, &labels), 0.5);
    }
}
