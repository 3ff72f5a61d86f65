//! Closed-form transport on the real line.

use crate::error::{Error, Result};

fn sorted_atoms(xs: &[f64], ws: &[f64]) -> Result<Vec<(f64, f64)>> {
    if xs.len() != ws.len() {
        return Err(Error::Shape(format!(
            "{} positions with {} weights",
            xs.len(),
            ws.len()
        )));
    }
    if xs.is_empty() {
        return Err(Error::Parameter("measure must be nonempty".into()));
    }
    if xs.iter().chain(ws).any(|v| !v.is_finite()) || ws.iter().any(|&w| w < 0.0) {
        return Err(Error::Parameter("positions and weights must be finite, weights >= 0".into()));
    }
    let total: f64 = ws.iter().sum();
    if (total - 1.0).abs() > super::WEIGHT_SUM_TOL {
        return Err(Error::Parameter(format!("weights sum to {total}, expected 1")));
    }
    let mut atoms: Vec<(f64, f64)> = xs.iter().copied().zip(ws.iter().copied()).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(atoms)
}

/// W_p between two weighted atom sets on the line via the monotone
/// (quantile) coupling; returns the p-th root of the cost.
pub fn wasserstein_1d(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("cost exponent p = {p} must be >= 1")));
    }
    let a = sorted_atoms(xs, wx)?;
    let b = sorted_atoms(ys, wy)?;
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let c = (a[i].0 - b[j].0).abs().powf(p);
        if ra < rb {
            total += ra * c;
            rb -= ra;
            i += 1;
            ra = a.get(i).map_or(0.0, |x| x.1);
        } else {
            total += rb * c;
            ra -= rb;
            j += 1;
            rb = b.get(j).map_or(0.0, |x| x.1);
        }
    }
    Ok(super::root(total, p))
}

/// W₁ on `[0,1]` between weighted atoms and a piecewise-uniform density
/// given by the masses of `K` equal cells; computed exactly as `∫|F - G|`.
pub fn w1_atoms_vs_cells(positions: &[f64], weights: &[f64], cell_masses: &[f64]) -> Result<f64> {
    let atoms = sorted_atoms(positions, weights)?;
    if atoms.iter().any(|&(x, _)| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Parameter("atoms must lie in [0, 1]".into()));
    }
    let k = cell_masses.len();
    if k == 0 {
        return Err(Error::Parameter("density needs at least one cell".into()));
    }
    let mut cum = Vec::with_capacity(k + 1);
    cum.push(0.0);
    for m in cell_masses {
        cum.push(cum.last().unwrap() + m);
    }
    let density_cdf = |t: f64| -> f64 {
        let pos = t * k as f64;
        let cell = (pos.floor() as usize).min(k - 1);
        cum[cell] + cell_masses[cell] * (pos - cell as f64)
    };

    // Breakpoints: cell edges and atom positions.
    let mut breaks: Vec<f64> = (0..=k).map(|c| c as f64 / k as f64).collect();
    breaks.extend(atoms.iter().map(|a| a.0));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut total = 0.0;
    let mut next_atom = 0;
    let mut atom_cdf = 0.0;
    for w in breaks.windows(2) {
        let (s, e) = (w[0], w[1]);
        while next_atom < atoms.len() && atoms[next_atom].0 <= s {
            atom_cdf += atoms[next_atom].1;
            next_atom += 1;
        }
        let h0 = atom_cdf - density_cdf(s);
        let h1 = atom_cdf - density_cdf(e);
        let len = e - s;
        total += if h0 * h1 >= 0.0 {
            0.5 * (h0.abs() + h1.abs()) * len
        } else {
            len * (h0 * h0 + h1 * h1) / (2.0 * (h0.abs() + h1.abs()))
        };
    }
    Ok(total)
}
