use crate::model::ModelParams;

/// Adam with decoupled weight decay, applied only to matrices and
/// embeddings (tensors flagged `decay` in the layout).
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        Self { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams<f32>, grads: &[f32], lr: f64) {
        assert_eq!(grads.len(), params.data.len());
        self.step += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let lr_f = lr as f32;
        let (c1, c2, eps) = (c1 as f32, c2 as f32, self.eps as f32);
        for entry in &params.layout.entries {
            let wd = if entry.decay { self.weight_decay as f32 } else { 0.0 };
            for i in entry.range() {
                let g = grads[i];
                let m = b1 * self.m[i] + (1.0 - b1) * g;
                let v = b2 * self.v[i] + (1.0 - b2) * g * g;
                self.m[i] = m;
                self.v[i] = v;
                let mhat = m / c1;
                let vhat = v / c2;
                let p = &mut params.data[i];
                *p -= lr_f * (mhat / (vhat.sqrt() + eps) + wd * *p);
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f32], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
