pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment estimates. Persist across calls so online updates continue
/// the optimizer trajectory rather than restarting it.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first step exactly lr·sign(g) up to ε
        let mut a = Adam::new(2);
        let mut p = [1.0, -1.0];
        a.update(&mut p, &[0.5, -3.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
        assert_eq!(a.step, 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut a = Adam::new(1);
        let mut p = [5.0];
        for _ in 0..5000 {
            let g = [2.0 * (p[0] - 2.0)];
            a.update(&mut p, &g, 0.01);
        }
        assert!((p[0] - 2.0).abs() < 1e-3);
    }
}
