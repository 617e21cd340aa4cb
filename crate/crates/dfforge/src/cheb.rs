//! Chebyshev series on an interval: fitting, Clenshaw evaluation, spectral
//! differentiation and integration. Used for the tabulated coefficient
//! fallback and for caching synthesized energy functions on grid jobs.

/// A truncated Chebyshev expansion f(x) = sum_k c_k T_k(u) with
/// u = 2(x - lo)/(hi - lo) - 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebSeries {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl ChebSeries {
    /// Interpolate `f` on `n` Chebyshev points of the first kind.
    pub fn fit(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2 && hi > lo);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                f(mid + half * theta.cos())
            })
            .collect();
        let mut coeffs = vec![0.0; n];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, s) in samples.iter().enumerate() {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                acc += s * (k as f64 * theta).cos();
            }
            *ck = 2.0 * acc / n as f64;
        }
        coeffs[0] *= 0.5;
        ChebSeries { lo, hi, coeffs }
    }

    /// Fit with doubling resolution until the coefficient tail drops below
    /// `tol` relative to the largest coefficient. Returns the series and the
    /// achieved relative tail; callers decide whether that is acceptable.
    pub fn fit_adaptive(
        f: &dyn Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        tol: f64,
        max_n: usize,
    ) -> (Self, f64) {
        let mut n = 17;
        loop {
            let series = ChebSeries::fit(f, lo, hi, n);
            let tail = series.relative_tail();
            if tail <= tol || n >= max_n {
                return (series, tail);
            }
            n = 2 * n - 1;
        }
    }

    /// Max of the last three coefficients relative to the overall max.
    pub fn relative_tail(&self) -> f64 {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.coeffs.len();
        self.coeffs[n.saturating_sub(3)..]
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
            / scale
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let u = 2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * u * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + u * b1 - b2
    }

    /// Series of the derivative df/dx.
    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len();
        let scale = 2.0 / (self.hi - self.lo);
        let mut d = vec![0.0; n.max(1)];
        if n >= 2 {
            // Standard descending recurrence for Chebyshev derivative coefficients.
            let mut dnext = 0.0; // d_{k+2}
            let mut dcur = 0.0; // d_{k+1}
            for k in (0..n - 1).rev() {
                let dk = dnext + 2.0 * (k as f64 + 1.0) * self.coeffs[k + 1];
                dnext = dcur;
                dcur = dk;
                d[k] = dk;
            }
            d[0] *= 0.5;
        }
        d.truncate((n - 1).max(1));
        ChebSeries {
            lo: self.lo,
            hi: self.hi,
            coeffs: d.iter().map(|c| c * scale).collect(),
        }
    }

    /// Series of the antiderivative vanishing at `lo`.
    pub fn antiderivative(&self) -> Self {
        let n = self.coeffs.len();
        let scale = 0.25 * (self.hi - self.lo);
        let mut a = vec![0.0; n + 1];
        let c = |k: usize| -> f64 {
            if k < n {
                if k == 0 {
                    2.0 * self.coeffs[0]
                } else {
                    self.coeffs[k]
                }
            } else {
                0.0
            }
        };
        for (k, ak) in a.iter_mut().enumerate().skip(1) {
            *ak = scale * (c(k - 1) - c(k + 1)) / k as f64;
        }
        // Fix the constant so the antiderivative vanishes at x = lo (u = -1).
        let mut at_lo = 0.0;
        let mut sign = -1.0;
        for ak in a.iter().skip(1) {
            at_lo += sign * ak;
            sign = -sign;
        }
        a[0] = -at_lo;
        ChebSeries {
            lo: self.lo,
            hi: self.hi,
            coeffs: a,
        }
    }
}
