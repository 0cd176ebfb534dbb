//! Forward-difference gradient (Neumann: the last difference along each axis
//! is zero), its adjoint, and the symmetrized gradient used by TGV.
//!
//! Symmetric tensors are stored as six components (xx, yy, zz, xy, xz, yz);
//! their inner product counts the off-diagonal entries twice.

pub type VectorField = [Vec<f64>; 3];
pub type TensorField = [Vec<f64>; 6];

/// Off-diagonal storage slot for the (i, j) pair, i ≠ j.
pub const fn off_diagonal(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 1) | (1, 0) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

fn stride(dims: [usize; 3], axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    }
}

#[inline]
fn coord(dims: [usize; 3], v: usize, axis: usize) -> usize {
    match axis {
        0 => v % dims[0],
        1 => (v / dims[0]) % dims[1],
        _ => v / (dims[0] * dims[1]),
    }
}

/// `out = D_axis u` (overwrites).
pub fn diff(u: &[f64], dims: [usize; 3], axis: usize, out: &mut [f64]) {
    let s = stride(dims, axis);
    let n = dims[axis];
    for v in 0..u.len() {
        out[v] = if coord(dims, v, axis) + 1 < n {
            u[v + s] - u[v]
        } else {
            0.0
        };
    }
}

/// `out += D_axisᵀ p`.
pub fn diff_adjoint_add(p: &[f64], dims: [usize; 3], axis: usize, out: &mut [f64]) {
    let s = stride(dims, axis);
    let n = dims[axis];
    for v in 0..p.len() {
        let c = coord(dims, v, axis);
        let mut acc = 0.0;
        if c > 0 {
            acc += p[v - s];
        }
        if c + 1 < n {
            acc -= p[v];
        }
        out[v] += acc;
    }
}

pub fn zeros_vector(n: usize) -> VectorField {
    [vec![0.0; n], vec![0.0; n], vec![0.0; n]]
}

pub fn zeros_tensor(n: usize) -> TensorField {
    std::array::from_fn(|_| vec![0.0; n])
}

pub fn gradient(u: &[f64], dims: [usize; 3], out: &mut VectorField) {
    for (axis, o) in out.iter_mut().enumerate() {
        diff(u, dims, axis, o);
    }
}

/// `∇ᵀp` (overwrites `out`).
pub fn gradient_adjoint(p: &VectorField, dims: [usize; 3], out: &mut [f64]) {
    out.fill(0.0);
    for (axis, pa) in p.iter().enumerate() {
        diff_adjoint_add(pa, dims, axis, out);
    }
}

/// `E w`: diagonal `D_i w_i`, off-diagonal `½(D_j w_i + D_i w_j)`.
pub fn sym_gradient(w: &VectorField, dims: [usize; 3], out: &mut TensorField, tmp: &mut [f64]) {
    for i in 0..3 {
        diff(&w[i], dims, i, &mut out[i]);
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let slot = off_diagonal(i, j);
        diff(&w[i], dims, j, &mut out[slot]);
        diff(&w[j], dims, i, tmp);
        for (o, t) in out[slot].iter_mut().zip(tmp.iter()) {
            *o = 0.5 * (*o + t);
        }
    }
}

/// Adjoint of [`sym_gradient`] under the weighted tensor inner product:
/// `(Eᵀq)_i = D_iᵀ q_ii + Σ_{j≠i} D_jᵀ q_ij`.
pub fn sym_gradient_adjoint(q: &TensorField, dims: [usize; 3], out: &mut VectorField) {
    for (i, o) in out.iter_mut().enumerate() {
        o.fill(0.0);
        diff_adjoint_add(&q[i], dims, i, o);
        for j in (0..3).filter(|&j| j != i) {
            diff_adjoint_add(&q[off_diagonal(i, j)], dims, j, o);
        }
    }
}

/// `Σ_v |p(v)|₂` over a vector field.
pub fn vector_l21(p: &VectorField) -> f64 {
    (0..p[0].len())
        .map(|v| (p[0][v] * p[0][v] + p[1][v] * p[1][v] + p[2][v] * p[2][v]).sqrt())
        .sum()
}

#[inline]
pub fn tensor_norm_sq(q: &TensorField, v: usize) -> f64 {
    q[0][v] * q[0][v]
        + q[1][v] * q[1][v]
        + q[2][v] * q[2][v]
        + 2.0 * (q[3][v] * q[3][v] + q[4][v] * q[4][v] + q[5][v] * q[5][v])
}

pub fn tensor_l21(q: &TensorField) -> f64 {
    (0..q[0].len()).map(|v| tensor_norm_sq(q, v).sqrt()).sum()
}

/// Pointwise projection onto `{|p(v)|₂ ≤ radius}`.
pub fn project_vector(p: &mut VectorField, radius: f64) {
    for v in 0..p[0].len() {
        let n = (p[0][v] * p[0][v] + p[1][v] * p[1][v] + p[2][v] * p[2][v]).sqrt();
        if n > radius {
            let s = radius / n;
            p[0][v] *= s;
            p[1][v] *= s;
            p[2][v] *= s;
        }
    }
}

pub fn project_tensor(q: &mut TensorField, radius: f64) {
    for v in 0..q[0].len() {
        let n = tensor_norm_sq(q, v).sqrt();
        if n > radius {
            let s = radius / n;
            for c in q.iter_mut() {
                c[v] *= s;
            }
        }
    }
}
