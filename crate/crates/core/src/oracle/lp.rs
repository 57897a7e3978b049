use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exact::{ConfidenceBound, Method, RegionPoint, TestDesign};

pub const ORACLE_MAX_N: u64 = 2000;

/// Mass placed on each total failure count `z = 0..=n+1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryMixture {
    weights: Vec<f64>,
}

impl AdversaryMixture {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return domain("mixture weights must be nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("mixture weights sum to {total}, not 1"));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Acceptance probability and joint success probability under the
    /// mixture, given the vertex table of the same design.
    pub fn evaluate(&self, table: &[RegionPoint]) -> (f64, f64) {
        self.weights
            .iter()
            .zip(table)
            .fold((0.0, 0.0), |(h, g), (w, p)| (h + w * p.h, g + w * p.g))
    }
}

/// Vertices `(h_z, g_z)` built by pushing each observed failure through the
/// channel one at a time (a Pascal-row recursion), truncated at `l`.
pub fn vertex_table(design: &TestDesign) -> Result<Vec<RegionPoint>> {
    let (n, l) = (design.n(), design.l());
    if n > ORACLE_MAX_N {
        return Err(Error::Scale(format!("oracle handles n <= {ORACLE_MAX_N}, got {n}")));
    }
    let (hide, count) = (design.lambda(), design.nu());
    let width = l as usize + 1;
    // accept[k] = P(at most l of k observed failures survive the channel).
    let mut accept = Vec::with_capacity(n as usize + 1);
    let mut row = vec![0.0; width];
    row[0] = 1.0;
    accept.push(1.0);
    for _ in 0..n {
        for j in (0..width).rev() {
            let from_below = if j > 0 { row[j - 1] } else { 0.0 };
            row[j] = hide * row[j] + count * from_below;
        }
        accept.push(row.iter().sum::<f64>());
    }
    let scale = (n + 1) as f64;
    Ok((0..=n + 1)
        .map(|z| {
            let clean = (n + 1 - z) as f64 / scale;
            let dirty = z as f64 / scale;
            let a_clean = if z <= n { accept[z as usize] } else { 0.0 };
            let a_dirty = if z > 0 { accept[z as usize - 1] } else { 0.0 };
            RegionPoint {
                z,
                h: clean * a_clean + dirty * a_dirty,
                g: clean * a_clean,
            }
        })
        .collect())
}

/// Where the minimum of the conditional success ratio is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Support {
    Vertex(u64),
    /// Mixture of vertices `upper` (weight `weight`) and `lower`, sitting on
    /// the acceptance level `delta`.
    Edge { upper: u64, lower: u64, weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub bound: ConfidenceBound,
    pub support: Support,
    pub min_ratio: f64,
}

impl OracleSolution {
    pub fn mixture(&self, n: u64) -> AdversaryMixture {
        let mut w = vec![0.0; n as usize + 2];
        match self.support {
            Support::Vertex(z) => w[z as usize] = 1.0,
            Support::Edge {
                upper,
                lower,
                weight,
            } => {
                w[upper as usize] += weight;
                w[lower as usize] += 1.0 - weight;
            }
        }
        AdversaryMixture { weights: w }
    }
}

/// Minimizes `g / h` over mixtures with `h >= delta` by scanning every
/// feasible vertex and every segment crossing `h = delta`.
pub fn oracle_solve(design: &TestDesign) -> Result<OracleSolution> {
    let table = vertex_table(design)?;
    let delta = design.delta();
    let mut best = f64::INFINITY;
    let mut support = Support::Vertex(0);
    for v in table.iter().filter(|v| v.h >= delta) {
        let r = v.g / v.h;
        if r < best {
            best = r;
            support = Support::Vertex(v.z);
        }
    }
    for hi in table.iter().filter(|v| v.h > delta) {
        for lo in table.iter().filter(|v| v.h < delta) {
            let t = (delta - lo.h) / (hi.h - lo.h);
            let g = lo.g + t * (hi.g - lo.g);
            let r = g / delta;
            if r < best {
                best = r;
                support = Support::Edge {
                    upper: hi.z,
                    lower: lo.z,
                    weight: t,
                };
            }
        }
    }
    let comp = best.clamp(0.0, 1.0);
    let z_hat = match support {
        Support::Vertex(z) => Some(z),
        Support::Edge { upper, .. } => Some(upper),
    };
    Ok(OracleSolution {
        bound: ConfidenceBound::from_parts(1.0 - comp, comp, Method::OracleLp, z_hat),
        support,
        min_ratio: best,
    })
}

pub fn ucl_oracle_lp(design: &TestDesign) -> Result<ConfidenceBound> {
    Ok(oracle_solve(design)?.bound)
}

fn cross(o: &RegionPoint, a: &RegionPoint, b: &RegionPoint) -> f64 {
    (a.h - o.h) * (b.g - o.g) - (a.g - o.g) * (b.h - o.h)
}

fn lower_hull(table: &[RegionPoint]) -> Vec<RegionPoint> {
    let mut pts = table.to_vec();
    pts.sort_by(|a, b| a.h.total_cmp(&b.h).then(a.g.total_cmp(&b.g)));
    pts.dedup_by(|b, a| a.h == b.h);
    let mut hull: Vec<RegionPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// The lower boundary of the achievable region at acceptance level `x`.
pub fn lower_envelope_eval(design: &TestDesign, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("x = {x} must lie in [0, 1]"));
    }
    let hull = lower_hull(&vertex_table(design)?);
    if x < hull[0].h {
        return Ok(0.0);
    }
    for w in hull.windows(2) {
        if x <= w[1].h {
            let t = (x - w[0].h) / (w[1].h - w[0].h);
            return Ok(w[0].g + t * (w[1].g - w[0].g));
        }
    }
    Ok(hull.last().map_or(0.0, |p| p.g))
}
