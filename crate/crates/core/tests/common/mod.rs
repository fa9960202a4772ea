//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use vvc::grid::{Injections, NetworkModel};

type C = Complex<f64>;

/// Bus admittance matrix assembled directly from the branch list.
pub fn ybus(net: &NetworkModel) -> DMatrix<C> {
    let n = net.n_buses();
    let mut y = DMatrix::from_element(n, n, C::new(0.0, 0.0));
    for (k, bus) in net.buses().iter().enumerate() {
        y[(k, k)] += C::new(bus.g_shunt, bus.b_shunt);
    }
    for br in net.branches() {
        let s = C::new(br.g, br.b);
        let (i, j) = (br.from_bus, br.to_bus);
        y[(i, i)] += s;
        y[(j, j)] += s;
        y[(i, j)] -= s;
        y[(j, i)] -= s;
    }
    y
}

/// Complex voltages by the Z-bus fixed-point iteration
/// `V = Z (conj(S / V) - Y_s V_s)` over the non-slack buses, slack at 1∠0.
pub fn fixed_point_voltages(net: &NetworkModel, inj: &Injections, tol: f64) -> Option<Vec<C>> {
    let n = net.n_buses();
    let s = net.slack();
    let y = ybus(net);
    let others: Vec<usize> = (0..n).filter(|&k| k != s).collect();
    let m = others.len();
    let y_red = DMatrix::from_fn(m, m, |a, b| y[(others[a], others[b])]);
    let z = y_red.try_inverse()?;
    let y_s = DVector::from_fn(m, |a, _| y[(others[a], s)]);
    let mut v = DVector::from_element(m, C::new(1.0, 0.0));
    for _ in 0..10_000 {
        let current = DVector::from_fn(m, |a, _| {
            let k = others[a];
            (C::new(inj.p[k], inj.q[k]) / v[a]).conj() - y_s[a]
        });
        let next = &z * current;
        let step = (&next - &v).iter().map(|d| d.norm()).fold(0.0, f64::max);
        v = next;
        if !v.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return None;
        }
        if step < tol {
            let mut out = vec![C::new(1.0, 0.0); n];
            for (a, &k) in others.iter().enumerate() {
                out[k] = v[a];
            }
            return Some(out);
        }
    }
    None
}

/// Net complex injections `V conj(Y V)`.
pub fn injections_of(net: &NetworkModel, v: &[C]) -> Vec<C> {
    let y = ybus(net);
    let vv = DVector::from_column_slice(v);
    let i = &y * &vv;
    v.iter().zip(i.iter()).map(|(a, b)| a * b.conj()).collect()
}

pub fn polar(mag: f64, ang: f64) -> C {
    C::from_polar(mag, ang)
}

/// Relative error with a floor on the denominator.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference of `f` at `x` along coordinate `k`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[k] += h;
    let up = f(&p);
    p[k] = x[k] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// Worst relative error between `analytic` and central differences of
/// `f` over the coordinates `coords`.
pub fn worst_fd_error(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], coords: &[usize], h: f64) -> f64 {
    coords
        .iter()
        .map(|&k| rel_error(analytic[k], central_difference(f, x, k, h)))
        .fold(0.0, f64::max)
}
