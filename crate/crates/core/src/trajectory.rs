//! Snap-limited (fourth-order) point-to-point setpoints.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionProfile {
    pub displacement: f64,
    pub max_velocity: f64,
    pub max_acceleration: f64,
    pub max_jerk: f64,
    pub max_snap: f64,
    pub sample_time: f64,
}

impl MotionProfile {
    pub fn validate(&self) -> Result<()> {
        let bounds = [
            ("max_velocity", self.max_velocity),
            ("max_acceleration", self.max_acceleration),
            ("max_jerk", self.max_jerk),
            ("max_snap", self.max_snap),
            ("sample_time", self.sample_time),
        ];
        for (name, b) in bounds {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {b}"
                )));
            }
        }
        if !self.displacement.is_finite() {
            return Err(Error::Parameter("displacement must be finite".into()));
        }
        Ok(())
    }
}

/// Position and its derivatives on a common grid of `N` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    pub r: DVector<f64>,
    pub v: DVector<f64>,
    pub a: DVector<f64>,
    pub jk: DVector<f64>,
    pub s: DVector<f64>,
    pub sample_time: f64,
}

impl ReferenceSignal {
    pub fn zeros(n: usize, sample_time: f64) -> Self {
        let z = DVector::zeros(n);
        Self {
            r: z.clone(),
            v: z.clone(),
            a: z.clone(),
            jk: z.clone(),
            s: z,
            sample_time,
        }
    }

    /// Derivatives estimated by backward differences, for references that arrive as raw samples.
    pub fn from_position(r: DVector<f64>, sample_time: f64) -> Result<Self> {
        let v = finite_difference(&r, sample_time, 1)?;
        let a = finite_difference(&r, sample_time, 2)?;
        let jk = finite_difference(&a, sample_time, 1)?;
        let s = finite_difference(&r, sample_time, 4)?;
        Ok(Self {
            r,
            v,
            a,
            jk,
            s,
            sample_time,
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Largest `t` in `[0, hi]` with `ok(t)`, assuming `ok` is true on a prefix of the interval.
fn largest_feasible(hi: f64, ok: impl Fn(f64) -> bool) -> f64 {
    if hi <= 0.0 || ok(hi) {
        return hi.max(0.0);
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PhaseCounts {
    snap: usize,
    jerk: usize,
    acc: usize,
    vel: usize,
}

fn continuous_phases(x: f64, p: &MotionProfile) -> [f64; 4] {
    let (v, a, j, s) = (p.max_velocity, p.max_acceleration, p.max_jerk, p.max_snap);
    let slack = 1.0 + 1e-12;
    let ts = (j / s)
        .min((a / s).sqrt())
        .min((v / (2.0 * s)).cbrt())
        .min((x / (8.0 * s)).powf(0.25));
    let jpk = s * ts;
    let tj = largest_feasible(a / jpk - ts, |tj| {
        let vel = jpk * (ts + tj) * (2.0 * ts + tj);
        vel <= v * slack && vel * (4.0 * ts + 2.0 * tj) <= x * slack
    });
    let apk = jpk * (ts + tj);
    let ta = largest_feasible(v / apk - 2.0 * ts - tj, |ta| {
        apk * (2.0 * ts + tj + ta) * (4.0 * ts + 2.0 * tj + ta) <= x * slack
    });
    let vpk = apk * (2.0 * ts + tj + ta);
    let tacc = 4.0 * ts + 2.0 * tj + ta;
    let tv = ((x - vpk * tacc) / vpk).max(0.0);
    [ts, tj, ta, tv]
}

fn snap_pattern(c: PhaseCounts) -> Vec<i64> {
    let half = [
        (1, c.snap),
        (0, c.jerk),
        (-1, c.snap),
        (0, c.acc),
        (-1, c.snap),
        (0, c.jerk),
        (1, c.snap),
    ];
    let mut out = Vec::new();
    for &(sign, len) in &half {
        out.extend(std::iter::repeat_n(sign, len));
    }
    out.extend(std::iter::repeat_n(0, c.vel));
    for &(sign, len) in &half {
        out.extend(std::iter::repeat_n(-sign, len));
    }
    out
}

/// Integer-valued unit channels `[s, jk, a, v, r]` over `k = 0..=K`.
fn integrate_unit(pattern: &[i64]) -> [Vec<i128>; 5] {
    let k = pattern.len();
    let mut ch: [Vec<i128>; 5] = Default::default();
    for c in ch.iter_mut() {
        c.resize(k + 1, 0);
    }
    for (i, &p) in pattern.iter().enumerate() {
        ch[0][i] = p as i128;
    }
    for i in 0..k {
        for d in 1..5 {
            ch[d][i + 1] = ch[d][i] + ch[d - 1][i];
        }
    }
    ch
}

/// Symmetric snap-bang profile padded with the end position to `n` samples.
pub fn fourth_order_reference(profile: &MotionProfile, n: usize) -> Result<ReferenceSignal> {
    profile.validate()?;
    let ts = profile.sample_time;
    if profile.displacement == 0.0 {
        return Ok(ReferenceSignal::zeros(n, ts));
    }
    let x = profile.displacement.abs();
    let sign = profile.displacement.signum();

    let times = continuous_phases(x, profile);
    let count = |t: f64| (t / ts - 1e-9).ceil().max(0.0) as usize;
    let mut counts = PhaseCounts {
        snap: count(times[0]).max(1),
        jerk: count(times[1]),
        acc: count(times[2]),
        vel: count(times[3]),
    };

    let (pattern, unit, scale) = loop {
        let pattern = snap_pattern(counts);
        let unit = integrate_unit(&pattern);
        let kend = pattern.len();
        let peak = |d: usize| unit[d].iter().map(|x| x.unsigned_abs()).max().unwrap_or(0) as f64;
        let disp = unit[4][kend] as f64 * ts.powi(4);
        let vel = peak(3) * ts.powi(3);
        let limit = profile
            .max_snap
            .min(profile.max_jerk / (peak(1) * ts))
            .min(profile.max_acceleration / (peak(2) * ts * ts))
            .min(profile.max_velocity / vel);
        let scale = x / disp;
        if scale <= limit * (1.0 + 1e-12) {
            break (pattern, unit, scale);
        }
        let extra = ((x / limit - disp) / (vel * ts)).ceil().max(1.0) as usize;
        counts.vel += extra;
    };

    let kend = pattern.len();
    if kend + 1 > n {
        return Err(Error::Parameter(format!(
            "motion profile needs {} samples but the trial has {n}",
            kend + 1
        )));
    }
    let c = sign * scale;
    let channel = |d: usize, gain: f64| {
        let mut out = DVector::zeros(n);
        for k in 0..=kend {
            out[k] = c * gain * unit[d][k] as f64;
        }
        out
    };
    let mut r = channel(4, ts.powi(4));
    let end = r[kend];
    for k in kend + 1..n {
        r[k] = end;
    }
    Ok(ReferenceSignal {
        r,
        v: channel(3, ts.powi(3)),
        a: channel(2, ts * ts),
        jk: channel(1, ts),
        s: channel(0, 1.0),
        sample_time: ts,
    })
}

/// Causal backward difference of order 1, 2 or 4, scaled by `ts^-order`.
///
/// Applied as repeated first differences, which keeps constant segments exactly zero.
pub fn finite_difference(x: &DVector<f64>, ts: f64, order: usize) -> Result<DVector<f64>> {
    if !matches!(order, 1 | 2 | 4) {
        return Err(Error::Parameter(format!(
            "finite difference order must be 1, 2 or 4, got {order}"
        )));
    }
    if x.len() < order + 1 {
        return Err(Error::dim(
            "signal too short for difference order",
            order + 1,
            x.len(),
        ));
    }
    let mut out = x.clone();
    for pass in 0..order {
        for k in (pass + 1..x.len()).rev() {
            out[k] -= out[k - 1];
        }
    }
    out.rows_mut(0, order).fill(0.0);
    Ok(out * ts.powi(-(order as i32)))
}
