//! Parameter storage for the transformer. All tensors are `Array2<f64>`
//! (biases and layernorm vectors shaped `(1, k)`), enumerated in one
//! canonical order shared by the optimizer, gradient buffers, and
//! checkpoints.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array2<f64>,
    pub ln1_b: Array2<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array2<f64>,
    pub ln2_g: Array2<f64>,
    pub ln2_b: Array2<f64>,
    pub w_fc: Array2<f64>,
    pub b_fc: Array2<f64>,
    pub w_proj: Array2<f64>,
    pub b_proj: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GptParams {
    pub wte: Array2<f64>,
    pub wpe: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array2<f64>,
    pub lnf_b: Array2<f64>,
    pub w_head: Array2<f64>,
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        // Box-Muller on open-interval uniforms.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

impl GptParams {
    /// GPT-style initialization: normal(0, 0.02) for projections and
    /// embeddings, zeros for biases, ones for layernorm gains.
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = config.d_model;
        let ff = config.d_ff;
        let v = config.vocab_size;
        let std = 0.02;
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                ln1_g: Array2::ones((1, d)),
                ln1_b: Array2::zeros((1, d)),
                w_q: normal(rng, d, d, std),
                b_q: Array2::zeros((1, d)),
                w_k: normal(rng, d, d, std),
                b_k: Array2::zeros((1, d)),
                w_v: normal(rng, d, d, std),
                b_v: Array2::zeros((1, d)),
                w_o: normal(rng, d, d, std),
                b_o: Array2::zeros((1, d)),
                ln2_g: Array2::ones((1, d)),
                ln2_b: Array2::zeros((1, d)),
                w_fc: normal(rng, d, ff, std),
                b_fc: Array2::zeros((1, ff)),
                w_proj: normal(rng, ff, d, std),
                b_proj: Array2::zeros((1, d)),
            })
            .collect();
        Self {
            wte: normal(rng, v, d, std),
            wpe: normal(rng, config.max_seq, d, std),
            layers,
            lnf_g: Array2::ones((1, d)),
            lnf_b: Array2::zeros((1, d)),
            w_head: normal(rng, d, v, std),
        }
    }

    /// Zero-valued gradient buffer with matching shapes.
    pub fn zeros_like(&self) -> Self {
        let z = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        Self {
            wte: z(&self.wte),
            wpe: z(&self.wpe),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: z(&l.ln1_g),
                    ln1_b: z(&l.ln1_b),
                    w_q: z(&l.w_q),
                    b_q: z(&l.b_q),
                    w_k: z(&l.w_k),
                    b_k: z(&l.b_k),
                    w_v: z(&l.w_v),
                    b_v: z(&l.b_v),
                    w_o: z(&l.w_o),
                    b_o: z(&l.b_o),
                    ln2_g: z(&l.ln2_g),
                    ln2_b: z(&l.ln2_b),
                    w_fc: z(&l.w_fc),
                    b_fc: z(&l.b_fc),
                    w_proj: z(&l.w_proj),
                    b_proj: z(&l.b_proj),
                })
                .collect(),
            lnf_g: z(&self.lnf_g),
            lnf_b: z(&self.lnf_b),
            w_head: z(&self.w_head),
        }
    }

    /// Tensors in canonical order with name and weight-decay eligibility
    /// (matrices decay, biases and layernorm vectors do not).
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>, bool)> {
        let mut out: Vec<(String, &Array2<f64>, bool)> = vec![
            ("wte".into(), &self.wte, true),
            ("wpe".into(), &self.wpe, true),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend([
                (format!("h{i}.ln1_g"), &l.ln1_g, false),
                (format!("h{i}.ln1_b"), &l.ln1_b, false),
                (format!("h{i}.w_q"), &l.w_q, true),
                (format!("h{i}.b_q"), &l.b_q, false),
                (format!("h{i}.w_k"), &l.w_k, true),
                (format!("h{i}.b_k"), &l.b_k, false),
                (format!("h{i}.w_v"), &l.w_v, true),
                (format!("h{i}.b_v"), &l.b_v, false),
                (format!("h{i}.w_o"), &l.w_o, true),
                (format!("h{i}.b_o"), &l.b_o, false),
                (format!("h{i}.ln2_g"), &l.ln2_g, false),
                (format!("h{i}.ln2_b"), &l.ln2_b, false),
                (format!("h{i}.w_fc"), &l.w_fc, true),
                (format!("h{i}.b_fc"), &l.b_fc, false),
                (format!("h{i}.w_proj"), &l.w_proj, true),
                (format!("h{i}.b_proj"), &l.b_proj, false),
            ]);
        }
        out.extend([
            ("lnf_g".into(), &self.lnf_g, false),
            ("lnf_b".into(), &self.lnf_b, false),
            ("w_head".into(), &self.w_head, true),
        ]);
        out
    }

    /// Mutable view in the same canonical order as [`named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(&mut Array2<f64>, bool)> {
        let mut out: Vec<(&mut Array2<f64>, bool)> =
            vec![(&mut self.wte, true), (&mut self.wpe, true)];
        for l in &mut self.layers {
            out.extend([
                (&mut l.ln1_g, false),
                (&mut l.ln1_b, false),
                (&mut l.w_q, true),
                (&mut l.b_q, false),
                (&mut l.w_k, true),
                (&mut l.b_k, false),
                (&mut l.w_v, true),
                (&mut l.b_v, false),
                (&mut l.w_o, true),
                (&mut l.b_o, false),
                (&mut l.ln2_g, false),
                (&mut l.ln2_b, false),
                (&mut l.w_fc, true),
                (&mut l.b_fc, false),
                (&mut l.w_proj, true),
                (&mut l.b_proj, false),
            ]);
        }
        out.extend([
            (&mut self.lnf_g, false),
            (&mut self.lnf_b, false),
            (&mut self.w_head, true),
        ]);
        out
    }

    /// Elementwise in-place accumulation; shapes must match.
    pub fn add_assign(&mut self, other: &GptParams) {
        let mut mine = self.tensors_mut();
        let theirs = other.named_tensors();
        for ((a, _), (_, b, _)) in mine.iter_mut().zip(theirs.iter()) {
            **a += *b;
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t, _)| t.len()).sum()
    }
}
