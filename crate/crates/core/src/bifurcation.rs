//! Projection coefficients, (d1, d2) region geometry and leading-order Hopf
//! data for the coexistence steady state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eigen::EigenPair;
use crate::error::{Error, Result};
use crate::grid::{flux_divergence, inner_product, integral, laplacian, Field};
use crate::steady::ModelParams;

/// How the self-advection integrals kappa1, kappa2 are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaConvention {
    /// int phi div(phi grad phi), the flux that appears in the model.
    #[default]
    SelfFlux,
    /// int phi Laplacian(phi). The preset line tables (Q1, Q2) were produced
    /// with this variant; see the README.
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaSet {
    pub convention: KappaConvention,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub kappa5: f64,
    pub kappa6: f64,
    pub kappa7: f64,
    pub kappa8: f64,
}

fn integral_of_product(fs: &[&Field]) -> Result<f64> {
    let mut acc = fs[0].clone();
    for f in &fs[1..] {
        acc = acc.zip_with(f, |a, b| a * b)?;
    }
    Ok(integral(&acc))
}

pub fn compute_kappas(
    eig1: &EigenPair,
    eig2: &EigenPair,
    omega: f64,
    convention: KappaConvention,
) -> Result<KappaSet> {
    let (phi, psi) = (&eig1.phi, &eig2.phi);
    if phi.grid() != psi.grid() {
        return Err(Error::GridMismatch);
    }
    let (c, s) = (omega.cos(), omega.sin());
    let (self1, self2) = match convention {
        KappaConvention::SelfFlux => (
            inner_product(phi, &flux_divergence(phi, phi)?)?,
            inner_product(psi, &flux_divergence(psi, psi)?)?,
        ),
        KappaConvention::Laplacian => (
            inner_product(phi, &laplacian(phi))?,
            inner_product(psi, &laplacian(psi))?,
        ),
    };
    let ppp = integral_of_product(&[phi, phi, phi])?;
    let ppq = integral_of_product(&[phi, phi, psi])?;
    let pqq = integral_of_product(&[phi, psi, psi])?;
    let qqq = integral_of_product(&[psi, psi, psi])?;
    Ok(KappaSet {
        convention,
        kappa1: c * self1,
        kappa2: s * self2,
        kappa3: c * ppp,
        kappa4: s * ppq,
        kappa5: c * pqq,
        kappa6: s * qqq,
        kappa7: c * ppq,
        kappa8: s * pqq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KSet {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

pub fn compute_ks(kappas: &KappaSet, params: &ModelParams, lambda1_star: f64, lambda2_star: f64) -> Result<KSet> {
    let ks = KSet {
        k1: params.a11 * lambda1_star * kappas.kappa3,
        k2: params.a22 * lambda2_star * kappas.kappa6,
        k3: params.a21 * lambda2_star * kappas.kappa8,
        k4: params.a12 * lambda1_star * kappas.kappa7,
    };
    for (name, v) in [("K1", ks.k1), ("K2", ks.k2), ("K3", ks.k3), ("K4", ks.k4)] {
        if !(v > 0.0) {
            return Err(Error::Admissibility(format!("{name} = {v} is not positive")));
        }
    }
    Ok(ks)
}

/// d2 = slope * d1 + intercept
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn at(&self, d1: f64) -> f64 {
        self.slope * d1 + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionLines {
    pub l1: Line,
    pub l2: Line,
    pub l3: Line,
    pub l4: Line,
    pub l5: Line,
    /// (K2-K3)k1/((K1-K4)k2), used with H2/H5.
    pub l6_h2h5: Option<Line>,
    /// (K2+K3)k1/((K1+K4)k2), used with H3/H6.
    pub l6_h3h6: Option<Line>,
}

fn through_origin(num: f64, den: f64) -> Option<Line> {
    if den == 0.0 {
        return None;
    }
    Some(Line {
        slope: num / den,
        intercept: 0.0,
    })
}

pub fn region_lines(kappas: &KappaSet, ks: &KSet) -> Result<RegionLines> {
    let (k1, k2) = (kappas.kappa1, kappas.kappa2);
    if k2 == 0.0 {
        return Err(Error::DegenerateGeometry("kappa2 = 0".into()));
    }
    if ks.k4 == 0.0 || ks.k1 == 0.0 {
        return Err(Error::DegenerateGeometry("K1 or K4 = 0".into()));
    }
    let s12 = -k1 / k2;
    let w12 = (ks.k1 + ks.k2) / k2;
    let s34 = ks.k3 * k1 / (ks.k4 * k2);
    let w34 = (ks.k1 * ks.k3 - ks.k2 * ks.k4).abs() / (ks.k4 * k2);
    Ok(RegionLines {
        l1: Line { slope: s12, intercept: w12 },
        l2: Line { slope: s12, intercept: -w12 },
        l3: Line { slope: s34, intercept: w34 },
        l4: Line { slope: s34, intercept: -w34 },
        l5: Line {
            slope: ks.k2 * k1 / (ks.k1 * k2),
            intercept: 0.0,
        },
        l6_h2h5: through_origin((ks.k2 - ks.k3) * k1, (ks.k1 - ks.k4) * k2),
        l6_h3h6: through_origin((ks.k2 + ks.k3) * k1, (ks.k1 + ks.k4) * k2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    D1,
    D2,
    #[serde(rename = "D3_1")]
    D31,
    #[serde(rename = "D3_2")]
    D32,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::D1 => "D1",
            Region::D2 => "D2",
            Region::D31 => "D3_1",
            Region::D32 => "D3_2",
        }
    }

    pub fn is_d3(&self) -> bool {
        matches!(self, Region::D31 | Region::D32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Hypotheses {
    pub h2: bool,
    pub h3: bool,
    pub h5: bool,
    pub h6: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionReport {
    pub d1: f64,
    pub d2: f64,
    pub lines: RegionLines,
    /// None when the point sits on a boundary line.
    pub region: Option<Region>,
    pub on_boundary: bool,
    pub flags: Hypotheses,
    pub d_star: Option<f64>,
}

const BOUNDARY_TOL: f64 = 1e-12;

fn strictly_between(v: f64, a: f64, b: f64) -> bool {
    v > a.min(b) && v < a.max(b)
}

/// Region membership of (d1, d2).
///
/// Bands are tested without regard to the order of their two bounding lines.
/// Where the two bands overlap the point is reported as D2. D3 is split by
/// whether the point lies on the same side of both band center lines (D3_1)
/// or on opposite sides (D3_2).
pub fn classify_region(d1: f64, d2: f64, kappas: &KappaSet, ks: &KSet) -> Result<RegionReport> {
    let lines = region_lines(kappas, ks)?;
    let bounds = [lines.l1.at(d1), lines.l2.at(d1), lines.l3.at(d1), lines.l4.at(d1)];
    let on_boundary = bounds
        .iter()
        .any(|b| (d2 - b).abs() <= BOUNDARY_TOL * (1.0 + b.abs().max(d2.abs())));

    let region = if on_boundary {
        None
    } else if strictly_between(d2, bounds[0], bounds[1]) {
        Some(Region::D2)
    } else if strictly_between(d2, bounds[2], bounds[3]) {
        Some(Region::D1)
    } else {
        let above12 = d2 > lines.l1.slope * d1;
        let above34 = d2 > lines.l3.slope * d1;
        Some(if above12 == above34 { Region::D31 } else { Region::D32 })
    };

    let det = ks.k1 * ks.k3 - ks.k2 * ks.k4;
    let h2 = det < 0.0 && ks.k1 - ks.k4 > 0.0 && ks.k3 - ks.k4 > 0.0;
    let h3 = det > 0.0 && ks.k1 - ks.k4 > 0.0 && ks.k3 - ks.k4 < 0.0;
    let ratio_ok = |upper: Option<Line>| match upper {
        Some(u) if d1 != 0.0 => {
            let q = d2 / d1;
            lines.l5.slope < q && q < u.slope
        }
        _ => false,
    };
    let h5 = ratio_ok(lines.l6_h2h5) && region == Some(Region::D31);
    let h6 = ratio_ok(lines.l6_h3h6) && region == Some(Region::D32);

    let den = d1 * kappas.kappa1 * ks.k3 - d2 * kappas.kappa2 * ks.k4;
    let d_star = if den != 0.0 { Some(det / den) } else { None };
    Ok(RegionReport {
        d1,
        d2,
        lines,
        region,
        on_boundary,
        flags: Hypotheses { h2, h3, h5, h6 },
        d_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopfBranch {
    /// p1, p2 < 0
    H2H5,
    /// p1, p2 > 0
    H3H6,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopfPoint {
    pub branch: HopfBranch,
    pub p1: f64,
    pub p2: f64,
    pub h: f64,
    pub theta: f64,
    pub d_star: f64,
    /// Residuals of the four real equations of the characteristic system.
    pub residuals: [f64; 4],
    pub unit_circle_error: f64,
    /// Largest residual at or below 1e-10.
    pub consistent: bool,
}

impl HopfPoint {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

pub const HOPF_RESIDUAL_TOL: f64 = 1e-10;

/// Residuals of
///   a cos t - K1 - K4 p1 = 0,   a sin t + K4 p2 + h = 0,
///   b cos t - K2 - K3 p1 = 0,   b sin t - K3 p2 + h = 0
/// with a = d1 kappa1, b = d2 kappa2.
#[allow(clippy::too_many_arguments)]
pub fn characteristic_residuals(d1: f64, d2: f64, kappas: &KappaSet, ks: &KSet, p1: f64, p2: f64, h: f64, theta: f64) -> [f64; 4] {
    let a = d1 * kappas.kappa1;
    let b = d2 * kappas.kappa2;
    let (c, s) = (theta.cos(), theta.sin());
    [
        a * c - ks.k1 - ks.k4 * p1,
        a * s + ks.k4 * p2 + h,
        b * c - ks.k2 - ks.k3 * p1,
        b * s - ks.k3 * p2 + h,
    ]
}

/// Closed-form Hopf data (p1, p2, h, theta) at s = 0.
///
/// Both arccos branches are tried and the one with the smaller residual is
/// kept. The system is overdetermined once p1^2 + p2^2 = 1 is imposed, so the
/// residual is reported rather than enforced; `consistent` records whether it
/// met `HOPF_RESIDUAL_TOL`.
pub fn hopf_point(d1: f64, d2: f64, kappas: &KappaSet, ks: &KSet, branch: HopfBranch) -> Result<HopfPoint> {
    let a = d1 * kappas.kappa1;
    let b = d2 * kappas.kappa2;
    let den = a * ks.k3 - b * ks.k4;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DegenerateGeometry("d1 k1 K3 = d2 k2 K4".into()));
    }
    if a - b == 0.0 {
        return Err(Error::DegenerateGeometry("d1 k1 = d2 k2".into()));
    }
    let d_star = (ks.k1 * ks.k3 - ks.k2 * ks.k4) / den;
    if d_star.abs() > 1.0 {
        return Err(Error::NoHopf { d_star: d_star.abs() });
    }
    let num = b * ks.k1 - a * ks.k2;
    let p1 = num / den;
    let disc = den * den - num * num;
    if disc < 0.0 {
        return Err(Error::DegenerateGeometry(format!("|p1| = {} exceeds 1", p1.abs())));
    }
    let p2 = disc.sqrt() / (b * ks.k4 - a * ks.k3);
    let h = (b * ks.k4 + a * ks.k3) / (a - b) * p2;

    let t0 = d_star.acos();
    let mut best: Option<HopfPoint> = None;
    for theta in [t0, 2.0 * PI - t0] {
        let residuals = characteristic_residuals(d1, d2, kappas, ks, p1, p2, h, theta);
        let cand = HopfPoint {
            branch,
            p1,
            p2,
            h,
            theta: theta.rem_euclid(2.0 * PI),
            d_star,
            residuals,
            unit_circle_error: (p1 * p1 + p2 * p2 - 1.0).abs(),
            consistent: false,
        };
        if best.map_or(true, |b| cand.max_residual() < b.max_residual()) {
            best = Some(cand);
        }
    }
    let mut best = best.expect("two candidates");
    best.consistent = best.max_residual() <= HOPF_RESIDUAL_TOL;
    Ok(best)
}

/// tau_n = (theta + 2 n pi) / (s h), n = 0..=n_max.
pub fn tau_sequence(theta: f64, h: f64, s: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("amplitude s = {s} must be positive")));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h = {h} must be positive")));
    }
    Ok((0..=n_max).map(|n| (theta + 2.0 * n as f64 * PI) / (s * h)).collect())
}

/// S_n(0) for L2-normalized eigenfunctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sn0 {
    pub n: usize,
    pub re: f64,
    pub im: f64,
    /// Im S_n(0) after eliminating kappa terms with the characteristic system.
    pub im_reduced: f64,
}

impl Sn0 {
    pub fn modulus_sq(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

pub fn sn0(hopf: &HopfPoint, d1: f64, d2: f64, kappas: &KappaSet, ks: &KSet, n: usize) -> Sn0 {
    let a = d1 * kappas.kappa1;
    let b = d2 * kappas.kappa2;
    let (p1, p2, h, th) = (hopf.p1, hopf.p2, hopf.h, hopf.theta);
    let phase = th + 2.0 * PI * n as f64;
    let t = phase / h;
    let (c, s) = (th.cos(), th.sin());
    let re = 1.0 + (p1 * p1 - p2 * p2) + t * (c * (a + b) + 2.0 * p1 * p2 * b * s);
    let im = 2.0 * p1 * p2 + t * (2.0 * p1 * p2 * b * c - (a + b) * s);
    let det = ks.k1 * ks.k3 - ks.k2 * ks.k4;
    let den = a * ks.k3 - b * ks.k4;
    let im_reduced = 2.0 * p1 * p2 + 2.0 * phase + t * (p2 * (ks.k4 - ks.k3) + 2.0 * p1 * p2 * b * det / den);
    Sn0 { n, re, im, im_reduced }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transversality {
    /// -(2h/|S|^2)(K4-K3) p2 + 4h^2/|S|^2
    pub value: f64,
    /// (2h/|S|^2)(d1 k1 + d2 k2) sin(theta). On exact solutions of the
    /// characteristic system this equals `value - 8 h^2/|S|^2`.
    pub value_alt: f64,
    pub sign: i8,
    pub degenerate: bool,
}

pub fn transversality_sign(hopf: &HopfPoint, d1: f64, d2: f64, kappas: &KappaSet, ks: &KSet, sn: &Sn0) -> Transversality {
    let m = sn.modulus_sq();
    let h = hopf.h;
    let value = -(2.0 * h / m) * (ks.k4 - ks.k3) * hopf.p2 + 4.0 * h * h / m;
    let value_alt = (2.0 * h / m) * (d1 * kappas.kappa1 + d2 * kappas.kappa2) * hopf.theta.sin();
    let degenerate = value.abs() < 1e-12;
    Transversality {
        value,
        value_alt,
        sign: if value > 0.0 { 1 } else { -1 },
        degenerate,
    }
}

/// Hopf data bundled with the delay sequence it generates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfReport {
    pub point: HopfPoint,
    pub s: f64,
    pub tau: Vec<f64>,
    pub sn0: Sn0,
    pub transversality: Transversality,
}

#[allow(clippy::too_many_arguments)]
pub fn hopf_report(
    d1: f64,
    d2: f64,
    kappas: &KappaSet,
    ks: &KSet,
    branch: HopfBranch,
    s: f64,
    n_max: usize,
) -> Result<HopfReport> {
    let point = hopf_point(d1, d2, kappas, ks, branch)?;
    let tau = tau_sequence(point.theta, point.h, s, n_max)?;
    let sn = sn0(&point, d1, d2, kappas, ks, 0);
    let transversality = transversality_sign(&point, d1, d2, kappas, ks, &sn);
    Ok(HopfReport {
        point,
        s,
        tau,
        sn0: sn,
        transversality,
    })
}

/// Branch implied by the hypothesis flags, if any.
pub fn branch_for(flags: &Hypotheses) -> Option<HopfBranch> {
    if flags.h2 && flags.h5 {
        Some(HopfBranch::H2H5)
    } else if flags.h3 && flags.h6 {
        Some(HopfBranch::H3H6)
    } else {
        None
    }
}
