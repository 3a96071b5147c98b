//! Independent oracles for the integration and acceptance tests. Nothing
//! here calls into the crate's numerics: densities, quadrature, filtering
//! and test statistics are written out from their textbook definitions.

#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log N(x; mean, var)` for a scalar.
pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// `log N(x; mean, I)` in any dimension.
pub fn log_std_normal(x: &[f64], mean: &[f64]) -> f64 {
    x.iter().zip(mean).map(|(a, b)| log_normal(*a, *b, 1.0)).sum()
}

/// `log N(x; mean, diag(var))`.
pub fn log_diag_normal(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((a, b), v)| log_normal(*a, *b, *v))
        .sum()
}

/// `log(1 / (1 + exp(-x)))`, written independently of the crate.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n % 2 == 0 && n > 0);
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// One proposal site in one dimension: transition `a`, emission `c`, proposal
/// `q(z) = N(a z_prev + mu, exp(log_var))` and rejection constant `M`.
#[derive(Clone, Copy, Debug)]
pub struct Site1d {
    pub a: f64,
    pub c: f64,
    pub mu: f64,
    pub log_var: f64,
    pub z_prev: f64,
    pub x: f64,
    pub m: f64,
}

impl Site1d {
    pub fn q_mean(&self) -> f64 {
        self.a * self.z_prev + self.mu
    }

    pub fn q_sd(&self) -> f64 {
        (0.5 * self.log_var).exp()
    }

    pub fn log_q(&self, z: f64) -> f64 {
        log_normal(z, self.q_mean(), self.log_var.exp())
    }

    /// `log p(z, x | z_prev)`.
    pub fn log_p(&self, z: f64) -> f64 {
        log_normal(z, self.a * self.z_prev, 1.0) + log_normal(self.x, self.c * z, 1.0)
    }

    /// `log a(z)` with `a = 1 / (1 + M q / p)`.
    pub fn log_accept(&self, z: f64) -> f64 {
        if self.m == 0.0 {
            0.0
        } else {
            log_sigmoid(self.log_p(z) - self.log_q(z) - self.m.ln())
        }
    }

    pub fn accept(&self, z: f64) -> f64 {
        self.log_accept(z).exp()
    }

    /// Mean and variance of the exact posterior `p(z | x, z_prev)`.
    pub fn posterior(&self) -> (f64, f64) {
        let prec = 1.0 + self.c * self.c;
        ((self.a * self.z_prev + self.c * self.x) / prec, 1.0 / prec)
    }

    /// `p(x | z_prev)` in closed form.
    pub fn log_evidence(&self) -> f64 {
        log_normal(self.x, self.c * self.a * self.z_prev, self.c * self.c + 1.0)
    }

    /// Grid covering +-8 proposal standard deviations and +-8 posterior
    /// standard deviations.
    pub fn range(&self) -> (f64, f64) {
        let (pm, pv) = self.posterior();
        let (qm, qs) = (self.q_mean(), self.q_sd());
        let ps = pv.sqrt();
        ((qm - 8.0 * qs).min(pm - 8.0 * ps), (qm + 8.0 * qs).max(pm + 8.0 * ps))
    }

    /// `Z = int q a dz` over +-8 proposal standard deviations with 2000
    /// Simpson intervals.
    pub fn z_quadrature(&self) -> f64 {
        let (m, s) = (self.q_mean(), self.q_sd());
        simpson(|z| (self.log_q(z) + self.log_accept(z)).exp(), m - 8.0 * s, m + 8.0 * s, 2000)
    }

    /// `log r(z)` with `r = q a / Z`.
    pub fn log_r(&self, z: f64, z_norm: f64) -> f64 {
        self.log_q(z) + self.log_accept(z) - z_norm.ln()
    }

    /// CDF of the accepted-sample law `r`, tabulated by cumulative Simpson
    /// panels on a fine grid and interpolated linearly.
    pub fn r_cdf(&self, panels: usize) -> impl Fn(f64) -> f64 {
        let (lo, hi) = self.range();
        let z_norm = simpson(|z| (self.log_q(z) + self.log_accept(z)).exp(), lo, hi, 2 * panels);
        let h = (hi - lo) / panels as f64;
        let mut knots = vec![0.0];
        for i in 0..panels {
            let a = lo + i as f64 * h;
            let piece = simpson(|z| self.log_r(z, z_norm).exp(), a, a + h, 2);
            knots.push(knots[i] + piece);
        }
        move |z: f64| {
            if z <= lo {
                return 0.0;
            }
            if z >= hi {
                return 1.0;
            }
            let u = (z - lo) / h;
            let i = (u.floor() as usize).min(panels - 1);
            let frac = u - i as f64;
            knots[i] + frac * (knots[i + 1] - knots[i])
        }
    }

    /// `sup |r - q|` on a 2001-point grid after replacing `M`.
    pub fn sup_gap(&self, m: f64) -> f64 {
        let tiny = Site1d { m, ..*self };
        let z_norm = tiny.z_quadrature();
        let (lo, hi) = tiny.range();
        (0..=2000)
            .map(|i| lo + (hi - lo) * i as f64 / 2000.0)
            .map(|z| (tiny.log_r(z, z_norm).exp() - tiny.log_q(z).exp()).abs())
            .fold(0.0, f64::max)
    }

    /// `(KL(r || posterior), KL(q || posterior))` by quadrature.
    pub fn kl_pair(&self, n: usize) -> (f64, f64) {
        let (lo, hi) = self.range();
        let z_norm = simpson(|z| (self.log_q(z) + self.log_accept(z)).exp(), lo, hi, n);
        let (pm, pv) = self.posterior();
        let log_post = |z: f64| log_normal(z, pm, pv);
        let kl_r = simpson(
            |z| {
                let lr = self.log_r(z, z_norm);
                lr.exp() * (lr - log_post(z))
            },
            lo,
            hi,
            n,
        );
        let kl_q = simpson(
            |z| {
                let lq = self.log_q(z);
                lq.exp() * (lq - log_post(z))
            },
            lo,
            hi,
            n,
        );
        (kl_r, kl_q)
    }
}

/// Twenty scalar sites with random proposal, emission, observation and `M`.
/// Proposal variances straddle the posterior variance.
pub fn random_sites(seed: u64) -> Vec<Site1d> {
    let mut s = vrpf::rng::Stream::new(seed, "configs");
    (0..20)
        .map(|_| Site1d {
            a: 0.42,
            c: 2.0 * s.uniform() - 1.0 + 0.5,
            mu: s.standard_normal(),
            log_var: s.standard_normal() * 0.7,
            z_prev: s.standard_normal(),
            x: 1.5 * s.standard_normal(),
            m: (2.0 * s.standard_normal()).exp(),
        })
        .collect()
}

/// `log p(x_{1:T})` for a scalar model by grid quadrature of the forward
/// recursion `f_t(z) = N(x_t; c z, 1) int f_{t-1}(u) N(z; a u, 1) du`,
/// `z_0 = 0`. Uses the trapezoid rule, which is spectrally accurate for
/// smooth integrands decaying at the grid ends.
pub fn grid_log_marginal_1d(a: f64, c: f64, xs: &[f64], half_width: f64, points: usize) -> f64 {
    let h = 2.0 * half_width / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| -half_width + i as f64 * h).collect();
    let mut f: Vec<f64> = grid
        .iter()
        .map(|&z| (log_normal(z, 0.0, 1.0) + log_normal(xs[0], c * z, 1.0)).exp())
        .collect();
    let mut log_scale = 0.0;
    for &x in &xs[1..] {
        // Rescale to avoid underflow over long sequences.
        let s: f64 = f.iter().sum::<f64>() * h;
        log_scale += s.ln();
        f.iter_mut().for_each(|v| *v /= s);
        f = grid
            .iter()
            .map(|&z| {
                let pred: f64 = grid
                    .iter()
                    .zip(&f)
                    .enumerate()
                    .map(|(i, (&u, &fu))| {
                        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
                        w * fu * log_normal(z, a * u, 1.0).exp()
                    })
                    .sum::<f64>()
                    * h;
                pred * log_normal(x, c * z, 1.0).exp()
            })
            .collect();
    }
    let total: f64 = f
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i == points - 1 { 0.5 * v } else { *v })
        .sum::<f64>()
        * h;
    log_scale + total.ln()
}

/// `log p(x_{1:T})` for a general model by forming the joint Gaussian of the
/// stacked observations explicitly: `z_t = sum_{s<=t} A^{t-s} e_s`, so
/// `Cov(x_s, x_t) = C Cov(z_s, z_t) C^T + [s == t] I`.
pub fn stacked_log_marginal(a: &nalgebra::DMatrix<f64>, c: &nalgebra::DMatrix<f64>, xs: &[Vec<f64>]) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let t_len = xs.len();
    let (d_z, d_x) = (a.nrows(), c.nrows());
    // Cov(z_s, z_t) = sum_{r<=min(s,t)} A^{s-r} (A^{t-r})^T
    let mut powers = vec![DMatrix::<f64>::identity(d_z, d_z)];
    for k in 1..t_len {
        powers.push(a * &powers[k - 1]);
    }
    let n = t_len * d_x;
    let mut sigma = DMatrix::<f64>::zeros(n, n);
    for s in 0..t_len {
        for t in 0..t_len {
            let mut cz = DMatrix::<f64>::zeros(d_z, d_z);
            for r in 0..=s.min(t) {
                cz += &powers[s - r] * powers[t - r].transpose();
            }
            let mut block = c * cz * c.transpose();
            if s == t {
                block += DMatrix::<f64>::identity(d_x, d_x);
            }
            sigma.view_mut((s * d_x, t * d_x), (d_x, d_x)).copy_from(&block);
        }
    }
    let x = DVector::from_iterator(n, xs.iter().flatten().copied());
    let chol = sigma.cholesky().expect("joint covariance is positive definite");
    let l = chol.l();
    let y = l.solve_lower_triangular(&x).unwrap();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (n as f64 * LN_2PI + log_det + y.dot(&y))
}

/// Upper-tail p-value of Pearson's chi-square statistic. Cells with expected
/// count below 5 are pooled into the last cell.
pub fn chi_square_p_value(observed: &[f64], expected: &[f64]) -> f64 {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_tail, mut e_tail) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        if *e >= 5.0 && o_tail == 0.0 && e_tail == 0.0 {
            obs.push(*o);
            exp.push(*e);
        } else {
            o_tail += o;
            e_tail += e;
        }
    }
    if e_tail > 0.0 {
        obs.push(o_tail);
        exp.push(e_tail);
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (obs.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `max |F_n - F|` of a sample against a CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
