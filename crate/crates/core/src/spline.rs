//! Cubic spline on a uniform grid with complex values.

use num_complex::Complex64;

/// Natural cubic spline through `values[i]` at `t0 + i * dt`.
#[derive(Debug, Clone)]
pub struct UniformSpline {
    t0: f64,
    dt: f64,
    values: Vec<Complex64>,
    second: Vec<Complex64>,
}

impl UniformSpline {
    pub fn natural(t0: f64, dt: f64, values: Vec<Complex64>) -> Self {
        assert!(dt > 0.0, "grid spacing must be positive");
        assert!(values.len() >= 2, "spline needs at least two nodes");
        let n = values.len();
        let mut second = vec![Complex64::new(0.0, 0.0); n];
        if n > 2 {
            // Thomas algorithm for M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]) / dt^2
            let m = n - 2;
            let scale = 6.0 / (dt * dt);
            let mut c = vec![0.0; m];
            let mut d = vec![Complex64::new(0.0, 0.0); m];
            for i in 0..m {
                let rhs = (values[i + 2] - values[i + 1] * 2.0 + values[i]) * scale;
                if i == 0 {
                    c[0] = 0.25;
                    d[0] = rhs * 0.25;
                } else {
                    let denom = 4.0 - c[i - 1];
                    c[i] = 1.0 / denom;
                    d[i] = (rhs - d[i - 1]) / denom;
                }
            }
            second[m] = d[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = d[i] - second[i + 2] * c[i];
            }
        }
        Self {
            t0,
            dt,
            values,
            second,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.values.len() - 1) as f64 * self.dt
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Spline value at `t`; `t` is clamped to the grid and node times return
    /// the stored value exactly.
    #[inline]
    pub fn eval(&self, t: f64) -> Complex64 {
        let x = (t - self.t0) / self.dt;
        let last = self.values.len() - 1;
        let r = x.round();
        if (x - r).abs() <= 1e-11 * r.abs().max(1.0) && r >= 0.0 && (r as usize) <= last {
            return self.values[r as usize];
        }
        let x = x.clamp(0.0, last as f64);
        let i = (x.floor() as usize).min(last - 1);
        let u = x - i as f64;
        let v = 1.0 - u;
        let h2 = self.dt * self.dt / 6.0;
        self.values[i] * v
            + self.values[i + 1] * u
            + (self.second[i] * (v * v * v - v) + self.second[i + 1] * (u * u * u - u)) * h2
    }

    /// First derivative at `t`.
    pub fn derivative(&self, t: f64) -> Complex64 {
        let last = self.values.len() - 1;
        let x = ((t - self.t0) / self.dt).clamp(0.0, last as f64);
        let i = (x.floor() as usize).min(last - 1);
        let u = x - i as f64;
        let v = 1.0 - u;
        let h = self.dt;
        (self.values[i + 1] - self.values[i]) / h
            + (self.second[i + 1] * (3.0 * u * u - 1.0) - self.second[i] * (3.0 * v * v - 1.0))
                * (h / 6.0)
    }
}
