//! Dormand-Prince 8(5,3) with 7th-order dense output, after routine DOP853
//! of Hairer, Nørsett & Wanner.

use super::{Integrator, OdeError, Rhs, StepStats, Tolerance, C64};

// stage s (1-based) uses A[s - 1][j - 1], j < s; row 13 is unused
const A: [[f64; 15]; 16] = [
    [0.0; 15],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        0.03709200011850479,
        0.0,
        0.0,
        0.17038392571223998,
        0.10726203044637328,
        -0.015319437748624402,
        0.008273789163814023,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.6241109587160757,
        0.0,
        0.0,
        -3.3608926294469414,
        -0.868219346841726,
        27.59209969944671,
        20.154067550477894,
        -43.48988418106996,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.47766253643826434,
        0.0,
        0.0,
        -2.4881146199716677,
        -0.590290826836843,
        21.230051448181193,
        15.279233632882423,
        -33.28821096898486,
        -0.020331201708508627,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -0.9371424300859873,
        0.0,
        0.0,
        5.186372428844064,
        1.0914373489967295,
        -8.149787010746927,
        -18.52006565999696,
        22.739487099350505,
        2.4936055526796523,
        -3.0467644718982196,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        2.273310147516538,
        0.0,
        0.0,
        -10.53449546673725,
        -2.0008720582248625,
        -17.9589318631188,
        27.94888452941996,
        -2.8589982771350235,
        -8.87285693353063,
        12.360567175794303,
        0.6433927460157636,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        0.056167502283047954,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.25350021021662483,
        -0.2462390374708025,
        -0.12419142326381637,
        0.15329179827876568,
        0.00820105229563469,
        0.007567897660545699,
        -0.008298,
        0.0,
        0.0,
    ],
    [
        0.03183464816350214,
        0.0,
        0.0,
        0.0,
        0.0,
        0.028300909672366776,
        0.053541988307438566,
        -0.05492374857139099,
        0.0,
        0.0,
        -0.00010834732869724932,
        0.0003825710908356584,
        -0.00034046500868740456,
        0.1413124436746325,
        0.0,
    ],
    [
        -0.42889630158379194,
        0.0,
        0.0,
        0.0,
        0.0,
        -4.697621415361164,
        7.683421196062599,
        4.06898981839711,
        0.3567271874552811,
        0.0,
        0.0,
        0.0,
        -0.0013990241651590145,
        2.9475147891527724,
        -9.15095847217987,
    ],
];
const C: [f64; 16] = [
    0.0,
    0.05260015195876773,
    0.0789002279381516,
    0.1183503419072274,
    0.2816496580927726,
    0.3333333333333333,
    0.25,
    0.3076923076923077,
    0.6512820512820513,
    0.6,
    0.8571428571428571,
    1.0,
    0.0,
    0.1,
    0.2,
    0.7777777777777778,
];
const B: [f64; 12] = [
    0.054293734116568765,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450312892752409,
    1.8915178993145003,
    -5.801203960010585,
    0.3111643669578199,
    -0.1521609496625161,
    0.20136540080403034,
    0.04471061572777259,
];
const BHH: [f64; 3] = [0.2440944881889764, 0.7338466882816118, 0.022058823529411766];
const E: [f64; 12] = [
    0.01312004499419488,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.2251564463762044,
    -0.4957589496572502,
    1.6643771824549864,
    -0.35032884874997366,
    0.3341791187130175,
    0.08192320648511571,
    -0.022355307863886294,
];
const D: [[f64; 16]; 4] = [
    [
        -8.428938276109013,
        0.0,
        0.0,
        0.0,
        0.0,
        0.5667149535193777,
        -3.0689499459498917,
        2.38466765651207,
        2.117034582445028,
        -0.871391583777973,
        2.2404374302607883,
        0.6315787787694688,
        -0.08899033645133331,
        18.148505520854727,
        -9.194632392478356,
        -4.436036387594894,
    ],
    [
        10.427508642579134,
        0.0,
        0.0,
        0.0,
        0.0,
        242.28349177525817,
        165.20045171727028,
        -374.5467547226902,
        -22.113666853125306,
        7.733432668472264,
        -30.674084731089398,
        -9.332130526430229,
        15.697238121770845,
        -31.139403219565178,
        -9.35292435884448,
        35.81684148639408,
    ],
    [
        19.985053242002433,
        0.0,
        0.0,
        0.0,
        0.0,
        -387.0373087493518,
        -189.17813819516758,
        527.8081592054236,
        -11.57390253995963,
        6.8812326946963,
        -1.0006050966910838,
        0.7777137798053443,
        -2.778205752353508,
        -60.19669523126412,
        84.32040550667716,
        11.99229113618279,
    ],
    [
        -25.69393346270375,
        0.0,
        0.0,
        0.0,
        0.0,
        -154.18974869023643,
        -231.5293791760455,
        357.6391179106141,
        93.40532418362432,
        -37.45832313645163,
        104.0996495089623,
        29.8402934266605,
        -43.53345659001114,
        96.32455395918828,
        -39.17726167561544,
        -149.72683625798564,
    ],
];

const SAFETY: f64 = 0.9;
/// Bounds on `h_old / h_new`.
const FAC_LO: f64 = 1.0 / 6.0;
const FAC_HI: f64 = 1.0 / 0.333;

struct Dense {
    t0: f64,
    h: f64,
    r: [Vec<C64>; 8],
}

pub struct Dop853<F> {
    f: F,
    tol: Tolerance,
    t: f64,
    y: Vec<C64>,
    h: f64,
    h_max: f64,
    /// Stage derivatives `k[s-1]`, `s = 1..=16`; `k[12]` is `f(t + h, y_new)`.
    k: Vec<Vec<C64>>,
    y_new: Vec<C64>,
    tmp: Vec<C64>,
    fsal_valid: bool,
    last_rejected: bool,
    dense: Option<Dense>,
    stats: StepStats,
}

impl<F: Rhs> Dop853<F> {
    pub fn new(f: F, t0: f64, y0: Vec<C64>, tol: Tolerance) -> Self {
        let n = y0.len();
        let z = vec![C64::new(0.0, 0.0); n];
        Dop853 {
            f,
            tol,
            t: t0,
            y: y0,
            h: 0.0,
            h_max: f64::INFINITY,
            k: vec![z.clone(); 16],
            y_new: z.clone(),
            tmp: z,
            fsal_valid: false,
            last_rejected: false,
            dense: None,
            stats: StepStats::default(),
        }
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max.abs();
        self
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn rhs(&self) -> &F {
        &self.f
    }

    fn scale(&self, a: C64, b: C64) -> f64 {
        self.tol.atol + self.tol.rtol * a.norm().max(b.norm())
    }

    fn initial_step(&mut self, direction: f64) -> f64 {
        let n = self.y.len() as f64;
        let sc: Vec<f64> = self.y.iter().map(|v| self.tol.atol + self.tol.rtol * v.norm()).collect();
        let d0 = self.y.iter().zip(&sc).map(|(v, s)| v.norm_sqr() / (s * s)).sum::<f64>();
        let d1 = self.k[0].iter().zip(&sc).map(|(f, s)| f.norm_sqr() / (s * s)).sum::<f64>();
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
        h0 = h0.min(self.h_max);
        for i in 0..self.y.len() {
            self.tmp[i] = self.y[i] + self.k[0][i] * (direction * h0);
        }
        let (k0, rest) = self.k.split_at_mut(1);
        self.f.eval(self.t + direction * h0, &self.tmp, &mut rest[0]);
        self.stats.evaluations += 1;
        let d2 = (rest[0].iter().zip(&k0[0]).zip(&sc).map(|((a, b), s)| (a - b).norm_sqr() / (s * s)).sum::<f64>()).sqrt() / h0;
        let _ = n;
        let dm = d1.sqrt().max(d2);
        let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(1.0 / 8.0) };
        (100.0 * h0).min(h1).min(self.h_max)
    }

    /// Stages 2..=12 and the 8th-order update into `y_new`.
    fn stages(&mut self, h: f64) {
        let n = self.y.len();
        for s in 2..=12 {
            let row = &A[s - 1];
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, a) in row.iter().enumerate().take(s - 1) {
                    if *a != 0.0 {
                        acc += self.k[j][i] * *a;
                    }
                }
                self.tmp[i] = self.y[i] + acc * h;
            }
            let (done, rest) = self.k.split_at_mut(s - 1);
            let _ = done;
            self.f.eval(self.t + C[s - 1] * h, &self.tmp, &mut rest[0]);
        }
        self.stats.evaluations += 11;
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for (j, b) in B.iter().enumerate() {
                if *b != 0.0 {
                    acc += self.k[j][i] * *b;
                }
            }
            self.y_new[i] = self.y[i] + acc * h;
        }
    }

    fn error_norm(&self, h: f64) -> f64 {
        let n = self.y.len();
        let (mut err5, mut err3) = (0.0, 0.0);
        for i in 0..n {
            let sc = self.scale(self.y[i], self.y_new[i]);
            let mut e5 = C64::new(0.0, 0.0);
            for (j, e) in E.iter().enumerate() {
                if *e != 0.0 {
                    e5 += self.k[j][i] * *e;
                }
            }
            let incr = (self.y_new[i] - self.y[i]) / h;
            let e3 = incr - self.k[0][i] * BHH[0] - self.k[8][i] * BHH[1] - self.k[11][i] * BHH[2];
            err5 += e5.norm_sqr() / (sc * sc);
            err3 += e3.norm_sqr() / (sc * sc);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        h.abs() * err5 * (1.0 / (deno * n.max(1) as f64)).sqrt()
    }

    fn accept(&mut self, h: f64) {
        let n = self.y.len();
        // FSAL stage
        {
            let (_, rest) = self.k.split_at_mut(12);
            self.f.eval(self.t + h, &self.y_new, &mut rest[0]);
        }
        // three extra stages for the dense output
        for s in 14..=16 {
            let row = &A[s - 1];
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, a) in row.iter().enumerate().take(s - 1) {
                    if *a != 0.0 {
                        acc += self.k[j][i] * *a;
                    }
                }
                self.tmp[i] = self.y[i] + acc * h;
            }
            let (_, rest) = self.k.split_at_mut(s - 1);
            self.f.eval(self.t + C[s - 1] * h, &self.tmp, &mut rest[0]);
        }
        self.stats.evaluations += 4;

        let mut r: [Vec<C64>; 8] = std::array::from_fn(|_| Vec::with_capacity(n));
        for i in 0..n {
            let y0 = self.y[i];
            let dy = self.y_new[i] - y0;
            let bspl = self.k[0][i] * h - dy;
            r[0].push(y0);
            r[1].push(dy);
            r[2].push(bspl);
            r[3].push(dy - self.k[12][i] * h - bspl);
            for (row, d) in D.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (j, c) in d.iter().enumerate() {
                    if *c != 0.0 {
                        acc += self.k[j][i] * *c;
                    }
                }
                r[4 + row].push(acc * h);
            }
        }
        self.dense = Some(Dense { t0: self.t, h, r });
        std::mem::swap(&mut self.y, &mut self.y_new);
        let (k0, rest) = self.k.split_at_mut(1);
        k0[0].copy_from_slice(&rest[11]);
        self.t += h;
    }
}

impl<F: Rhs> Integrator for Dop853<F> {
    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> &[C64] {
        &self.y
    }

    fn stats(&self) -> StepStats {
        self.stats
    }

    fn reset_state(&mut self, t: f64, y: &[C64]) {
        self.t = t;
        self.y.copy_from_slice(y);
        self.fsal_valid = false;
        self.dense = None;
    }

    fn step(&mut self, t_limit: f64) -> Result<(), OdeError> {
        let direction = if t_limit >= self.t { 1.0 } else { -1.0 };
        if !self.fsal_valid {
            self.f.eval(self.t, &self.y, &mut self.k[0]);
            self.stats.evaluations += 1;
            self.fsal_valid = true;
        }
        if self.h == 0.0 {
            self.h = self.initial_step(direction);
        }
        let span = (t_limit - self.t).abs();
        let mut h = self.h.abs().min(self.h_max);
        let mut clamped = false;
        if h >= span {
            h = span;
            clamped = true;
        }
        loop {
            if h < 1e-14 * self.t.abs().max(1.0) && !clamped {
                return Err(OdeError::StepUnderflow { t: self.t, h, state: self.y.clone() });
            }
            let hs = direction * h;
            self.stages(hs);
            let err = self.error_norm(hs);
            if !err.is_finite() {
                if h < 1e-14 {
                    return Err(OdeError::NonFinite { t: self.t });
                }
                h *= 0.2;
                clamped = false;
                self.stats.rejected += 1;
                self.last_rejected = true;
                continue;
            }
            let fac11 = err.powf(1.0 / 8.0);
            if err <= 1.0 {
                let fac = (fac11 / SAFETY).clamp(FAC_LO, FAC_HI);
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.accept(hs);
                self.last_rejected = false;
                if !clamped || h_new < self.h.abs() {
                    self.h = h_new.min(self.h_max);
                }
                self.stats.accepted += 1;
                return Ok(());
            }
            h /= (fac11 / SAFETY).min(FAC_HI);
            clamped = false;
            self.stats.rejected += 1;
            self.last_rejected = true;
        }
    }

    fn dense_output(&self, t: f64, out: &mut [C64]) {
        let d = self.dense.as_ref().expect("dense output requires an accepted step");
        let s = (t - d.t0) / d.h;
        let s1 = 1.0 - s;
        let r = &d.r;
        for (i, o) in out.iter_mut().enumerate() {
            let par = r[4][i] + (r[5][i] + (r[6][i] + r[7][i] * s) * s1) * s;
            *o = r[0][i] + (r[1][i] + (r[2][i] + (r[3][i] + par * s1) * s) * s1) * s;
        }
    }

    fn last_step_start(&self) -> Option<f64> {
        self.dense.as_ref().map(|d| d.t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonautonomous_accuracy() {
        // y' = y cos t, exact exp(sin t)
        let f = |t: f64, y: &[C64], dy: &mut [C64]| dy[0] = y[0] * t.cos();
        let mut s = Dop853::new(f, 0.0, vec![C64::new(1.0, 0.0)], Tolerance::uniform(1e-12));
        s.advance_to(10.0).unwrap();
        assert!((s.y()[0].re - 10f64.sin().exp()).abs() < 1e-10);
    }

    #[test]
    fn eighth_order_convergence() {
        // fixed steps through a huge tolerance and a step cap
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = -C64::i() * y[0] * (1.0 + y[0].norm_sqr());
        let err = |h: f64| {
            let mut s = Dop853::new(f, 0.0, vec![C64::new(1.0, 0.0)], Tolerance::uniform(1.0)).with_max_step(h);
            s.advance_to(2.0).unwrap();
            (s.y()[0] - C64::from_polar(1.0, -4.0)).norm()
        };
        let (e1, e2) = (err(0.2), err(0.1));
        let order = (e1 / e2).log2();
        assert!(order > 7.0, "observed order {order} ({e1:e}, {e2:e})");
    }

    #[test]
    fn dense_output_is_seventh_order_accurate() {
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut s = Dop853::new(f, 0.0, vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)], Tolerance::uniform(1e-12));
        let mut buf = vec![C64::new(0.0, 0.0); 2];
        for _ in 0..40 {
            s.step(100.0).unwrap();
            let t0 = s.last_step_start().unwrap();
            for frac in [0.1, 0.37, 0.5, 0.9] {
                let tm = t0 + frac * (s.t() - t0);
                s.dense_output(tm, &mut buf);
                assert!((buf[0].re - tm.sin()).abs() < 1e-10);
                assert!((buf[1].re - tm.cos()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fewer_steps_than_fifth_order() {
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = -C64::i() * y[0] * (1.0 + y[0].norm_sqr());
        let tol = Tolerance::uniform(1e-11);
        let mut a = Dop853::new(f, 0.0, vec![C64::new(1.0, 0.0)], tol);
        let mut b = super::super::DormandPrince::new(f, 0.0, vec![C64::new(1.0, 0.0)], tol);
        a.advance_to(50.0).unwrap();
        b.advance_to(50.0).unwrap();
        assert!(a.stats().accepted * 3 < b.stats().accepted);
        let err = (a.y()[0] - C64::from_polar(1.0, -100.0)).norm();
        assert!(err < 1e-7, "error {err:e}, steps {} vs {}", a.stats().accepted, b.stats().accepted);
    }
}
