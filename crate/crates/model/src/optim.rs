use crate::net::Param;

/// Adamax (the infinity-norm variant of Adam).
#[derive(Debug, Clone, PartialEq)]
pub struct Adamax {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps taken so far.
    pub t: u64,
    /// First moments, one buffer per parameter.
    pub m: Vec<Vec<f64>>,
    /// Exponentially weighted infinity norms.
    pub u: Vec<Vec<f64>>,
}

impl Adamax {
    pub fn new(lr: f64, params: &[Param]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            u: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    /// One update; `grads[k]` is `None` for parameters that received no
    /// gradient, which are treated as having gradient zero.
    pub fn step(&mut self, params: &mut [Param], grads: &[Option<&[f64]>]) {
        self.t += 1;
        let step = self.lr / (1.0 - self.beta1.powi(self.t as i32));
        for (k, p) in params.iter_mut().enumerate() {
            let (m, u) = (&mut self.m[k], &mut self.u[k]);
            let theta = p.value.data_mut();
            for i in 0..theta.len() {
                let g = grads[k].map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                u[i] = (self.beta2 * u[i]).max(g.abs());
                theta[i] -= step * m[i] / (u[i] + self.eps);
            }
        }
    }
}
