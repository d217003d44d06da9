//! Piecewise-affine zero-trace perturbations on a criss-cross triangulation of a
//! grid-aligned rectangle, and the discrete cell energy.
//!
//! Every grid square is cut into four triangles through its centroid. The
//! periodic variable is evaluated at triangle barycenters, which sit on a
//! lattice of spacing `1/(6N)` in the periodic variable; they are reduced modulo
//! the period with integer arithmetic so that translated problems are
//! bit-identical.

use serde::{Deserialize, Serialize};

use crate::algebra2d::Mat2;
use crate::error::{Error, Result};
use crate::integrand::{EnergyDensity, Point};
use crate::scalar::Real;
use crate::solver::Objective;

/// Rectangle of grid squares; `origin` is in units of one square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridRect {
    pub origin: [i64; 2],
    pub width: usize,
    pub height: usize,
}

impl GridRect {
    pub fn new(origin: [i64; 2], width: usize, height: usize) -> Self {
        Self { origin, width, height }
    }

    /// `(0, k)²` at `n` squares per unit length.
    pub fn block(k: usize, n: usize) -> Self {
        Self::new([0, 0], k * n, k * n)
    }

    pub fn translated(self, dx: i64, dy: i64) -> Self {
        Self::new([self.origin[0] + dx, self.origin[1] + dy], self.width, self.height)
    }

    pub fn squares(&self) -> usize {
        self.width * self.height
    }

    /// Split by the vertical grid line `at` squares from the left edge.
    pub fn split_vertical(self, at: usize) -> Result<(GridRect, GridRect)> {
        if at == 0 || at >= self.width {
            return Err(Error::InvalidArgument(format!("split at {at} outside 1..{}", self.width)));
        }
        let left = GridRect::new(self.origin, at, self.height);
        let right = GridRect::new([self.origin[0] + at as i64, self.origin[1]], self.width - at, self.height);
        Ok((left, right))
    }

    pub fn contains_rect(&self, other: &GridRect) -> bool {
        other.origin[0] >= self.origin[0]
            && other.origin[1] >= self.origin[1]
            && other.origin[0] + other.width as i64 <= self.origin[0] + self.width as i64
            && other.origin[1] + other.height as i64 <= self.origin[1] + self.height as i64
    }
}

// Local vertex coordinates (in sixths of a square) and barycenter offsets of
// the four triangles of a square: bottom, right, top, left. The third vertex
// is always the centroid.
const CORNERS: [[(usize, usize); 2]; 4] = [[(0, 0), (1, 0)], [(1, 0), (1, 1)], [(1, 1), (0, 1)], [(0, 1), (0, 0)]];
const BARY_SIXTHS: [[i64; 2]; 4] = [[3, 1], [5, 3], [3, 5], [1, 3]];

#[derive(Clone, Debug)]
pub struct Element<T> {
    /// Two lattice corners then the centroid.
    pub nodes: [usize; 3],
    /// 0 bottom, 1 right, 2 top, 3 left.
    pub kind: usize,
    /// Periodic variable at the barycenter, in `[0, 1)²`.
    pub quad: Point<T>,
    /// Physical barycenter.
    pub barycenter: Point<T>,
}

/// Criss-cross triangulation of a [`GridRect`].
#[derive(Clone, Debug)]
pub struct CellMesh<T> {
    rect: GridRect,
    period: usize,
    spacing: T,
    positions: Vec<Point<T>>,
    boundary: Vec<bool>,
    dof: Vec<Option<usize>>,
    n_free: usize,
    elements: Vec<Element<T>>,
    ref_grads: [[[T; 2]; 3]; 4],
}

fn reference_gradients<T: Real>() -> [[[T; 2]; 3]; 4] {
    let mut out = [[[T::zero(); 2]; 3]; 4];
    for (kind, corners) in CORNERS.iter().enumerate() {
        let p0 = [corners[0].0 as f64, corners[0].1 as f64];
        let p1 = [corners[1].0 as f64, corners[1].1 as f64];
        let p2 = [0.5, 0.5];
        // J = [p1 - p0 | p2 - p0]; rows of J^{-1} are the gradients of λ1, λ2
        let (a, b) = (p1[0] - p0[0], p2[0] - p0[0]);
        let (c, d) = (p1[1] - p0[1], p2[1] - p0[1]);
        let det = a * d - b * c;
        let g1 = [d / det, -b / det];
        let g2 = [-c / det, a / det];
        let g0 = [-(g1[0] + g2[0]), -(g1[1] + g2[1])];
        for (slot, g) in [g0, g1, g2].into_iter().enumerate() {
            out[kind][slot] = [T::of(g[0]), T::of(g[1])];
        }
    }
    out
}

impl<T: Real> CellMesh<T> {
    /// Mesh of `rect` with `period` squares per unit of the periodic variable
    /// and physical square side `spacing`.
    pub fn new(rect: GridRect, period: usize, spacing: T) -> Result<Self> {
        if rect.width == 0 || rect.height == 0 {
            return Err(Error::InvalidArgument("empty grid rectangle".into()));
        }
        if period == 0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(Error::InvalidArgument(format!("spacing {spacing} must be positive")));
        }
        let (w, h) = (rect.width, rect.height);
        let n_lattice = (w + 1) * (h + 1);
        let n_nodes = n_lattice + w * h;
        let six = T::of(6.0);
        let mut positions = Vec::with_capacity(n_nodes);
        let mut boundary = Vec::with_capacity(n_nodes);
        for j in 0..=h {
            for i in 0..=w {
                let gx = rect.origin[0] + i as i64;
                let gy = rect.origin[1] + j as i64;
                positions.push([T::of(gx as f64) * spacing, T::of(gy as f64) * spacing]);
                boundary.push(i == 0 || j == 0 || i == w || j == h);
            }
        }
        for j in 0..h {
            for i in 0..w {
                let gx = 6 * (rect.origin[0] + i as i64) + 3;
                let gy = 6 * (rect.origin[1] + j as i64) + 3;
                positions.push([T::of(gx as f64) / six * spacing, T::of(gy as f64) / six * spacing]);
                boundary.push(false);
            }
        }
        let mut dof = Vec::with_capacity(n_nodes);
        let mut n_free = 0;
        for &b in &boundary {
            if b {
                dof.push(None);
            } else {
                dof.push(Some(n_free));
                n_free += 1;
            }
        }

        let lattice = |i: usize, j: usize| j * (w + 1) + i;
        let modulus = 6 * period as i64;
        let inv = T::one() / T::of(modulus as f64);
        let mut elements = Vec::with_capacity(4 * w * h);
        for j in 0..h {
            for i in 0..w {
                let centroid = n_lattice + j * w + i;
                for (kind, corners) in CORNERS.iter().enumerate() {
                    let n0 = lattice(i + corners[0].0, j + corners[0].1);
                    let n1 = lattice(i + corners[1].0, j + corners[1].1);
                    let sx = 6 * (rect.origin[0] + i as i64) + BARY_SIXTHS[kind][0];
                    let sy = 6 * (rect.origin[1] + j as i64) + BARY_SIXTHS[kind][1];
                    let quad = [T::of(sx.rem_euclid(modulus) as f64) * inv, T::of(sy.rem_euclid(modulus) as f64) * inv];
                    let barycenter = [T::of(sx as f64) / six * spacing, T::of(sy as f64) / six * spacing];
                    elements.push(Element { nodes: [n0, n1, centroid], kind, quad, barycenter });
                }
            }
        }
        Ok(Self { rect, period, spacing, positions, boundary, dof, n_free, elements, ref_grads: reference_gradients() })
    }

    /// Mesh of `rect` in the unit-period setting: square side `1/n`.
    pub fn for_rect(rect: GridRect, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidArgument("subdivisions per unit length must be positive".into()));
        }
        Self::new(rect, n, T::one() / T::of_usize(n))
    }

    /// Mesh of the cell block `(0, k)²` with `n` squares per unit length.
    pub fn build(k: usize, n: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidArgument(format!("cell multiple k = {k} must be >= 1")));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("subdivisions N = {n} must be >= 2")));
        }
        Self::for_rect(GridRect::block(k, n), n)
    }

    pub fn rect(&self) -> GridRect {
        self.rect
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn elements(&self) -> &[Element<T>] {
        &self.elements
    }

    pub fn position(&self, node: usize) -> Point<T> {
        self.positions[node]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof[node]
    }

    pub fn element_area(&self) -> T {
        self.spacing * self.spacing / T::of(4.0)
    }

    /// Signed area of an element from its node positions.
    pub fn signed_area(&self, el: &Element<T>) -> T {
        let [a, b, c] = el.nodes.map(|n| self.positions[n]);
        ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) / T::of(2.0)
    }

    pub fn total_area(&self) -> T {
        T::of_usize(self.rect.squares()) * self.spacing * self.spacing
    }

    /// Reference (unit-square) gradients of the three hat functions of `el`.
    pub fn reference_gradients(&self, el: &Element<T>) -> &[[T; 2]; 3] {
        &self.ref_grads[el.kind]
    }

    /// Local lattice index of a node if it is a lattice node, else of the centroid.
    fn node_grid(&self, node: usize) -> (bool, usize, usize) {
        let w = self.rect.width;
        let n_lattice = (w + 1) * (self.rect.height + 1);
        if node < n_lattice {
            (true, node % (w + 1), node / (w + 1))
        } else {
            let c = node - n_lattice;
            (false, c % w, c / w)
        }
    }

    fn node_at(&self, lattice: bool, i: usize, j: usize) -> usize {
        let w = self.rect.width;
        if lattice {
            j * (w + 1) + i
        } else {
            (w + 1) * (self.rect.height + 1) + j * w + i
        }
    }
}

/// Nodal displacement `u` at every node of a mesh. Zero on the boundary unless
/// built with a full nodal assignment such as [`DisplacementField::affine`].
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField<T> {
    pub values: Vec<[T; 2]>,
}

impl<T: Real> DisplacementField<T> {
    pub fn zeros(mesh: &CellMesh<T>) -> Self {
        Self { values: vec![[T::zero(); 2]; mesh.n_nodes()] }
    }

    /// Nodal values of `x ↦ ξx` on every node, boundary included.
    pub fn affine(mesh: &CellMesh<T>, xi: &Mat2<T>) -> Self {
        Self { values: mesh.positions.iter().map(|&p| xi.apply(p)).collect() }
    }

    /// Field from physical values at the free nodes, two per node.
    pub fn from_free(mesh: &CellMesh<T>, free: &[T]) -> Result<Self> {
        if free.len() != 2 * mesh.n_free() {
            return Err(Error::InvalidArgument(format!(
                "expected {} free values, got {}",
                2 * mesh.n_free(),
                free.len()
            )));
        }
        let values = (0..mesh.n_nodes())
            .map(|n| mesh.dof(n).map_or([T::zero(); 2], |d| [free[2 * d], free[2 * d + 1]]))
            .collect();
        Ok(Self { values })
    }

    pub fn free_values(&self, mesh: &CellMesh<T>) -> Vec<T> {
        let mut out = vec![T::zero(); 2 * mesh.n_free()];
        for (n, v) in self.values.iter().enumerate() {
            if let Some(d) = mesh.dof(n) {
                out[2 * d] = v[0];
                out[2 * d + 1] = v[1];
            }
        }
        out
    }

    /// Free values divided by the square side, the unknowns the solver works on.
    pub fn normalized(&self, mesh: &CellMesh<T>) -> Vec<T> {
        let inv = T::one() / mesh.spacing();
        self.free_values(mesh).into_iter().map(|v| v * inv).collect()
    }

    pub fn from_normalized(mesh: &CellMesh<T>, v: &[T]) -> Result<Self> {
        let h = mesh.spacing();
        let free: Vec<T> = v.iter().map(|&c| c * h).collect();
        Self::from_free(mesh, &free)
    }

    pub fn has_zero_trace(&self, mesh: &CellMesh<T>) -> bool {
        self.values.iter().enumerate().all(|(n, v)| !mesh.is_boundary(n) || (v[0] == T::zero() && v[1] == T::zero()))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { values: self.values.iter().map(|v| [v[0] * s, v[1] * s]).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| [a[0] + b[0], a[1] + b[1]]).collect() }
    }

    /// Copy a field defined on a sub-rectangle into this one.
    ///
    /// Both meshes must share period and spacing; nodes outside `sub_mesh` keep
    /// their value.
    pub fn embed(&mut self, mesh: &CellMesh<T>, sub_mesh: &CellMesh<T>, sub: &DisplacementField<T>) -> Result<()> {
        if mesh.period() != sub_mesh.period() || mesh.spacing() != sub_mesh.spacing() {
            return Err(Error::InvalidArgument("embedded meshes must share period and spacing".into()));
        }
        if !mesh.rect().contains_rect(&sub_mesh.rect()) {
            return Err(Error::InvalidArgument("sub-rectangle not contained in target".into()));
        }
        let dx = (sub_mesh.rect().origin[0] - mesh.rect().origin[0]) as usize;
        let dy = (sub_mesh.rect().origin[1] - mesh.rect().origin[1]) as usize;
        for (n, v) in sub.values.iter().enumerate() {
            let (lattice, i, j) = sub_mesh.node_grid(n);
            self.values[mesh.node_at(lattice, i + dx, j + dy)] = *v;
        }
        Ok(())
    }

    /// Periodic tiling of a zero-trace field of a smaller block over `mesh`.
    pub fn tiled(mesh: &CellMesh<T>, cell_mesh: &CellMesh<T>, cell: &DisplacementField<T>) -> Result<Self> {
        let (cw, ch) = (cell_mesh.rect().width, cell_mesh.rect().height);
        let r = mesh.rect();
        if !r.width.is_multiple_of(cw) || !r.height.is_multiple_of(ch) {
            return Err(Error::InvalidArgument("target rectangle is not a multiple of the tile".into()));
        }
        let mut out = Self::zeros(mesh);
        for ty in 0..r.height / ch {
            for tx in 0..r.width / cw {
                let sub_rect = cell_mesh.rect();
                let placed = GridRect::new(
                    [r.origin[0] + (tx * cw) as i64, r.origin[1] + (ty * ch) as i64],
                    sub_rect.width,
                    sub_rect.height,
                );
                let placed_mesh = CellMesh::new(placed, mesh.period(), mesh.spacing())?;
                out.embed(mesh, &placed_mesh, cell)?;
            }
        }
        Ok(out)
    }
}

/// Per-triangle `(barycenter, ∇u)` of the piecewise-affine interpolant.
pub fn element_gradients<T: Real>(
    mesh: &CellMesh<T>,
    field: &DisplacementField<T>,
) -> Result<Vec<(Point<T>, Mat2<T>)>> {
    check_len(mesh, field)?;
    let inv = T::one() / mesh.spacing();
    Ok(mesh
        .elements()
        .iter()
        .map(|el| {
            let rg = mesh.reference_gradients(el);
            let mut g = Mat2::zero();
            for (slot, &node) in el.nodes.iter().enumerate() {
                g = g + Mat2::outer(field.values[node], rg[slot]);
            }
            (el.barycenter, g.scale(inv))
        })
        .collect())
}

fn check_len<T: Real>(mesh: &CellMesh<T>, field: &DisplacementField<T>) -> Result<()> {
    if field.values.len() != mesh.n_nodes() {
        return Err(Error::InvalidArgument(format!(
            "field has {} nodes, mesh has {}",
            field.values.len(),
            mesh.n_nodes()
        )));
    }
    Ok(())
}

/// `Σ_T |T| L(x_T, ξ + ∇φ_T)`; `+inf` as soon as one triangle leaves the domain.
pub fn cell_energy<T: Real, D: EnergyDensity<T> + ?Sized>(
    mesh: &CellMesh<T>,
    field: &DisplacementField<T>,
    xi: &Mat2<T>,
    density: &D,
) -> Result<T> {
    let grads = element_gradients(mesh, field)?;
    let mut sum = T::zero();
    for (el, (_, g)) in mesh.elements().iter().zip(&grads) {
        let v = density.eval(el.quad, &(*xi + *g));
        if !v.is_finite() {
            return Ok(T::infinity());
        }
        sum = sum + v;
    }
    Ok(sum * mesh.element_area())
}

/// Gradient of [`cell_energy`] with respect to the nodal values; zero on the
/// boundary.
pub fn cell_energy_gradient<T: Real, D: EnergyDensity<T> + ?Sized>(
    mesh: &CellMesh<T>,
    field: &DisplacementField<T>,
    xi: &Mat2<T>,
    density: &D,
) -> Result<DisplacementField<T>> {
    let grads = element_gradients(mesh, field)?;
    let scale = mesh.element_area() / mesh.spacing();
    let mut out = DisplacementField::zeros(mesh);
    for (el, (_, g)) in mesh.elements().iter().zip(&grads) {
        let dw = density
            .grad_xi(el.quad, &(*xi + *g))
            .ok_or_else(|| Error::Infeasible("cell energy is infinite at this field".into()))?;
        let rg = mesh.reference_gradients(el);
        for (slot, &node) in el.nodes.iter().enumerate() {
            if mesh.is_boundary(node) {
                continue;
            }
            let c = dw.apply(rg[slot]);
            out.values[node][0] = out.values[node][0] + c[0] * scale;
            out.values[node][1] = out.values[node][1] + c[1] * scale;
        }
    }
    Ok(out)
}

/// The discrete cell problem in normalized unknowns `v = u / spacing`.
///
/// The objective is `Σ_T L(x_T, ξ + ∇_T v) / 4`, the energy divided by the
/// square area; it depends on the mesh only through its grid, period and
/// element order, never through the spacing.
pub struct CellProblem<'a, T: Real, D: ?Sized> {
    mesh: &'a CellMesh<T>,
    xi: Mat2<T>,
    density: &'a D,
}

impl<'a, T: Real, D: EnergyDensity<T> + ?Sized> CellProblem<'a, T, D> {
    pub fn new(mesh: &'a CellMesh<T>, xi: Mat2<T>, density: &'a D) -> Self {
        Self { mesh, xi, density }
    }

    pub fn mesh(&self) -> &CellMesh<T> {
        self.mesh
    }

    #[inline]
    fn local_gradient(&self, el: &Element<T>, v: &[T]) -> Mat2<T> {
        let rg = self.mesh.reference_gradients(el);
        let mut g = self.xi;
        for (slot, &node) in el.nodes.iter().enumerate() {
            if let Some(d) = self.mesh.dof(node) {
                g = g + Mat2::outer([v[2 * d], v[2 * d + 1]], rg[slot]);
            }
        }
        g
    }

    /// Mean density over the rectangle for normalized unknowns `v`.
    pub fn density_of(&self, objective: T) -> T {
        objective / T::of_usize(self.mesh.rect().squares())
    }
}

impl<'a, T: Real, D: EnergyDensity<T> + ?Sized> Objective<T> for CellProblem<'a, T, D> {
    fn dim(&self) -> usize {
        2 * self.mesh.n_free()
    }

    fn value(&self, v: &[T]) -> T {
        let mut sum = T::zero();
        for el in self.mesh.elements() {
            let w = self.density.eval(el.quad, &self.local_gradient(el, v));
            if !w.is_finite() {
                return T::infinity();
            }
            sum = sum + w;
        }
        sum / T::of(4.0)
    }

    fn value_grad(&self, v: &[T], grad: &mut [T]) -> T {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let quarter = T::of(0.25);
        let mut sum = T::zero();
        for el in self.mesh.elements() {
            let f = self.local_gradient(el, v);
            let w = self.density.eval(el.quad, &f);
            if !w.is_finite() {
                return T::infinity();
            }
            sum = sum + w;
            let Some(dw) = self.density.grad_xi(el.quad, &f) else {
                return T::infinity();
            };
            let rg = self.mesh.reference_gradients(el);
            for (slot, &node) in el.nodes.iter().enumerate() {
                if let Some(d) = self.mesh.dof(node) {
                    let c = dw.apply(rg[slot]);
                    grad[2 * d] = grad[2 * d] + c[0] * quarter;
                    grad[2 * d + 1] = grad[2 * d + 1] + c[1] * quarter;
                }
            }
        }
        sum * quarter
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{growth_eval, Growth, StoredEnergy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = Mat2<f64>;

    fn random_field(mesh: &CellMesh<f64>, amp: f64, rng: &mut ChaCha8Rng) -> DisplacementField<f64> {
        let free: Vec<f64> = (0..2 * mesh.n_free()).map(|_| rng.gen_range(-amp..amp)).collect();
        DisplacementField::from_free(mesh, &free).unwrap()
    }

    #[test]
    fn mesh_counts_and_area() {
        let m = CellMesh::<f64>::build(1, 2).unwrap();
        assert_eq!(m.elements().len(), 16);
        assert_eq!(m.n_nodes(), 9 + 4);
        assert_eq!(m.n_free(), 1 + 4);
        let area: f64 = m.elements().iter().map(|e| m.signed_area(e)).sum();
        assert!((area - 1.0).abs() < 1e-12);

        let m = CellMesh::<f64>::build(2, 2).unwrap();
        let area: f64 = m.elements().iter().map(|e| m.signed_area(e)).sum();
        assert!((area - 4.0).abs() < 1e-12);

        let m = CellMesh::<f64>::build(3, 8).unwrap();
        assert_eq!(m.elements().len(), 2304);
        assert!(m.elements().iter().all(|e| m.signed_area(e) > 0.0));
    }

    #[test]
    fn mesh_rejects_bad_sizes() {
        assert!(CellMesh::<f64>::build(0, 4).is_err());
        assert!(CellMesh::<f64>::build(1, 1).is_err());
    }

    #[test]
    fn boundary_nodes_are_the_block_edges() {
        let m = CellMesh::<f64>::build(2, 3).unwrap();
        for n in 0..m.n_nodes() {
            let p = m.position(n);
            let on_edge = [p[0], p[1]].iter().any(|&c| c.abs() < 1e-12 || (c - 2.0).abs() < 1e-12);
            assert_eq!(m.is_boundary(n), on_edge, "node {n} at {p:?}");
        }
    }

    #[test]
    fn affine_reproduction() {
        let m = CellMesh::<f64>::build(2, 3).unwrap();
        let xi = M::new(0.3, -1.2, 0.7, 2.0);
        let f = DisplacementField::affine(&m, &xi);
        for (_, g) in element_gradients(&m, &f).unwrap() {
            assert!((g - xi).max_abs() < 1e-13);
        }
        let z = DisplacementField::zeros(&m);
        assert!(element_gradients(&m, &z).unwrap().iter().all(|(_, g)| *g == M::zero()));
    }

    #[test]
    fn gradients_are_linear_in_the_field() {
        let m = CellMesh::<f64>::build(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_field(&m, 0.1, &mut rng);
        let b = random_field(&m, 0.1, &mut rng);
        let ga = element_gradients(&m, &a).unwrap();
        let gb = element_gradients(&m, &b).unwrap();
        let gs = element_gradients(&m, &a.add(&b)).unwrap();
        for ((x, y), z) in ga.iter().zip(&gb).zip(&gs) {
            assert!((x.1 + y.1 - z.1).max_abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trace_fields_have_mean_zero_gradient() {
        let m = CellMesh::<f64>::build(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = random_field(&m, 0.2, &mut rng);
        assert!(f.has_zero_trace(&m));
        let total = element_gradients(&m, &f).unwrap().iter().fold(M::zero(), |acc, (_, g)| acc + *g);
        assert!(total.max_abs() < 1e-12);
    }

    #[test]
    fn constant_state_energy() {
        let m = CellMesh::<f64>::build(2, 4).unwrap();
        let g = Growth { p: 4.0 };
        let xi = M::new(0.2, 0.1, -0.3, 0.1);
        let e = cell_energy(&m, &DisplacementField::zeros(&m), &xi, &g).unwrap();
        assert!((e - 4.0 * growth_eval(&xi, 4.0)).abs() < 1e-12);
        let outside = M::new(0.0, 1.5, 0.0, 0.0);
        assert_eq!(cell_energy(&m, &DisplacementField::zeros(&m), &outside, &g).unwrap(), f64::INFINITY);
    }

    #[test]
    fn barrier_blows_up_as_one_triangle_collapses() {
        // Pulling a centroid toward a lattice edge shrinks the adjacent triangle.
        let m = CellMesh::<f64>::build(1, 2).unwrap();
        let w = StoredEnergy::<f64>::default();
        let centroid = (0..m.n_nodes()).find(|&n| !m.is_boundary(n) && m.position(n) == [0.25, 0.25]).unwrap();
        let mut last = 0.0;
        for step in [0.0, 0.1, 0.2, 0.23, 0.245, 0.2499] {
            let mut f = DisplacementField::zeros(&m);
            f.values[centroid] = [0.0, -step];
            let e = cell_energy(&m, &f, &M::zero(), &w).unwrap();
            assert!(e.is_finite());
            assert!(e > last);
            last = e;
        }
        assert!(last > 10.0);
        let mut f = DisplacementField::zeros(&m);
        f.values[centroid] = [0.0, -0.25];
        assert_eq!(cell_energy(&m, &f, &M::zero(), &w).unwrap(), f64::INFINITY);
    }

    fn fd_check(mesh: &CellMesh<f64>, field: &DisplacementField<f64>, xi: &M, density: &dyn EnergyDensity<f64>) -> f64 {
        let an = cell_energy_gradient(mesh, field, xi, density).unwrap();
        let free = field.free_values(mesh);
        let an_free = an.free_values(mesh);
        let h = 1e-6;
        let mut err: f64 = 0.0;
        let mut scale: f64 = 1e-12;
        for i in 0..free.len() {
            let mut p = free.clone();
            let mut q = free.clone();
            p[i] += h;
            q[i] -= h;
            let ep = cell_energy(mesh, &DisplacementField::from_free(mesh, &p).unwrap(), xi, density).unwrap();
            let eq = cell_energy(mesh, &DisplacementField::from_free(mesh, &q).unwrap(), xi, density).unwrap();
            let fd = (ep - eq) / (2.0 * h);
            err = err.max((fd - an_free[i]).abs());
            scale = scale.max(fd.abs());
        }
        err / scale
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let m = CellMesh::<f64>::build(1, 4).unwrap();
        let w = StoredEnergy::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let f = random_field(&m, 0.02, &mut rng);
            let xi = M::new(0.1, 0.2, -0.1, 0.05);
            assert!(fd_check(&m, &f, &xi, &w) < 1e-5);
        }
    }

    #[test]
    fn zero_field_is_stationary_for_growth() {
        let m = CellMesh::<f64>::build(1, 4).unwrap();
        let g = Growth { p: 4.0 };
        let xi = M::new(0.3, -0.2, 0.1, 0.4);
        let grad = cell_energy_gradient(&m, &DisplacementField::zeros(&m), &xi, &g).unwrap();
        assert!(grad.values.iter().all(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14));
    }

    #[test]
    fn directional_derivative_matches() {
        let m = CellMesh::<f64>::build(1, 4).unwrap();
        let w = StoredEnergy::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = random_field(&m, 0.02, &mut rng);
        let dir = random_field(&m, 1.0, &mut rng);
        let xi = M::new(-0.1, 0.3, 0.2, 0.1);
        let grad = cell_energy_gradient(&m, &f, &xi, &w).unwrap();
        let slope: f64 = grad.values.iter().zip(&dir.values).map(|(g, d)| g[0] * d[0] + g[1] * d[1]).sum();
        let h = 1e-6;
        let ep = cell_energy(&m, &f.add(&dir.scaled(h)), &xi, &w).unwrap();
        let em = cell_energy(&m, &f.add(&dir.scaled(-h)), &xi, &w).unwrap();
        let fd = (ep - em) / (2.0 * h);
        assert!((fd - slope).abs() <= 1e-6 * fd.abs().max(1.0));
    }

    #[test]
    fn gradient_on_infeasible_field_errors() {
        let m = CellMesh::<f64>::build(1, 2).unwrap();
        let w = StoredEnergy::<f64>::default();
        assert!(cell_energy_gradient(&m, &DisplacementField::zeros(&m), &M::new(0.0, 2.0, 0.0, 0.0), &w).is_err());
    }

    #[test]
    fn element_order_does_not_change_the_sum_materially() {
        let m = CellMesh::<f64>::build(2, 4).unwrap();
        let w = StoredEnergy::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = random_field(&m, 0.01, &mut rng);
        let xi = M::new(0.1, 0.0, 0.2, -0.1);
        let grads = element_gradients(&m, &f).unwrap();
        let mut terms: Vec<f64> =
            m.elements().iter().zip(&grads).map(|(el, (_, g))| w.eval(el.quad, &(xi + *g))).collect();
        let e1 = cell_energy(&m, &f, &xi, &w).unwrap();
        assert_eq!(e1.to_bits(), cell_energy(&m, &f, &xi, &w).unwrap().to_bits());
        terms.reverse();
        let e2 = terms.iter().sum::<f64>() * m.element_area();
        assert!((e1 - e2).abs() < 1e-12 * e1);
    }

    #[test]
    fn normalized_objective_is_spacing_free() {
        let w = StoredEnergy::<f64>::default();
        let a = CellMesh::new(GridRect::block(1, 4), 4, 0.25).unwrap();
        let b = CellMesh::new(GridRect::block(1, 4), 4, 0.0625).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..2 * a.n_free()).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let xi = M::new(0.1, 0.1, 0.0, 0.0);
        let pa = CellProblem::new(&a, xi, &w);
        let pb = CellProblem::new(&b, xi, &w);
        assert_eq!(pa.value(&v).to_bits(), pb.value(&v).to_bits());
    }

    #[test]
    fn normalized_gradient_matches_finite_differences() {
        let m = CellMesh::<f64>::build(1, 3).unwrap();
        let w = StoredEnergy::<f64>::default();
        let xi = M::new(0.05, -0.2, 0.1, 0.15);
        let prob = CellProblem::new(&m, xi, &w);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..prob.dim()).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let mut g = vec![0.0; prob.dim()];
        prob.value_grad(&v, &mut g);
        for i in 0..v.len() {
            let mut p = v.clone();
            let mut q = v.clone();
            p[i] += 1e-6;
            q[i] -= 1e-6;
            let fd = (prob.value(&p) - prob.value(&q)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn translation_gives_identical_quadrature() {
        let a = CellMesh::<f64>::for_rect(GridRect::block(1, 8), 8).unwrap();
        let b = CellMesh::<f64>::for_rect(GridRect::block(1, 8).translated(8, -16), 8).unwrap();
        for (x, y) in a.elements().iter().zip(b.elements()) {
            assert_eq!(x.quad, y.quad);
        }
    }

    #[test]
    fn tiling_and_embedding_preserve_zero_trace() {
        let small = CellMesh::<f64>::build(1, 4).unwrap();
        let big = CellMesh::<f64>::build(2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(&small, 0.05, &mut rng);
        let t = DisplacementField::tiled(&big, &small, &f).unwrap();
        assert!(t.has_zero_trace(&big));
        let w = StoredEnergy::<f64>::default();
        let xi = M::new(0.1, 0.0, 0.0, 0.1);
        let es = cell_energy(&small, &f, &xi, &w).unwrap();
        let eb = cell_energy(&big, &t, &xi, &w).unwrap();
        assert!((eb - 4.0 * es).abs() < 1e-12 * eb);
    }
}
