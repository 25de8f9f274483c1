//! Hexahedral box meshes and global point numbering.
//!
//! Vertices live on a regular `(ex+1) x (ey+1) x (ez+1)` lattice, stored with
//! x fastest. Element corners are listed in lexicographic reference order,
//! x fastest as well: corner `c = a + 2b + 4d` sits at reference coordinates
//! `(2a-1, 2b-1, 2d-1)`. Affine deformation moves vertices but keeps the
//! lattice indices, so point numbering never compares coordinates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::gll_f64;
use crate::error::{Result, SemError};

pub const MESH_FORMAT: &str = "sem-hexmesh";
pub const MESH_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoxBounds {
    pub fn unit() -> Self {
        BoxBounds {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    pub fn reference() -> Self {
        BoxBounds {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|d| self.max[d] - self.min[d]).product()
    }
}

/// `x -> matrix * x + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: [[f64; 3]; 3],
    pub shift: [f64; 3],
}

impl AffineMap {
    pub fn identity() -> Self {
        Self::linear([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn linear(matrix: [[f64; 3]; 3]) -> Self {
        AffineMap {
            matrix,
            shift: [0.0; 3],
        }
    }

    pub fn scale(s: f64) -> Self {
        Self::linear([[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]])
    }

    /// `x += factor * y`.
    pub fn shear_xy(factor: f64) -> Self {
        Self::linear([[1.0, factor, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.matrix)
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        let mut out = self.shift;
        for (r, o) in out.iter_mut().enumerate() {
            *o += m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2];
        }
        out
    }
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[derive(Clone, Debug, PartialEq)]
pub struct HexMesh {
    extents: [usize; 3],
    bounds: BoxBounds,
    vertices: Vec<[f64; 3]>,
    elements: Vec<[usize; 8]>,
}

/// Regular `ex x ey x ez` box mesh spanning `bounds`.
pub fn box_mesh(ex: usize, ey: usize, ez: usize, bounds: BoxBounds) -> Result<HexMesh> {
    if ex == 0 || ey == 0 || ez == 0 {
        return Err(SemError::InvalidArgument(format!(
            "box extents must be positive, got ({ex}, {ey}, {ez})"
        )));
    }
    if (0..3).any(|d| !(bounds.max[d] > bounds.min[d])) {
        return Err(SemError::InvalidArgument(
            "box bounds must satisfy min < max on every axis".into(),
        ));
    }
    let ext = [ex, ey, ez];
    let mut vertices = Vec::with_capacity((ex + 1) * (ey + 1) * (ez + 1));
    for k in 0..=ez {
        for j in 0..=ey {
            for i in 0..=ex {
                let idx = [i, j, k];
                let mut x = [0.0; 3];
                for d in 0..3 {
                    let t = idx[d] as f64 / ext[d] as f64;
                    x[d] = bounds.min[d] + t * (bounds.max[d] - bounds.min[d]);
                }
                vertices.push(x);
            }
        }
    }
    let mut elements = Vec::with_capacity(ex * ey * ez);
    for k in 0..ez {
        for j in 0..ey {
            for i in 0..ex {
                let v0 = i + (ex + 1) * (j + (ey + 1) * k);
                elements.push(corners_from(v0, ext));
            }
        }
    }
    Ok(HexMesh {
        extents: ext,
        bounds,
        vertices,
        elements,
    })
}

fn corners_from(v0: usize, ext: [usize; 3]) -> [usize; 8] {
    let mut c = [0; 8];
    for (corner, slot) in c.iter_mut().enumerate() {
        let (a, b, d) = (corner & 1, (corner >> 1) & 1, corner >> 2);
        *slot = v0 + a + (ext[0] + 1) * (b + (ext[1] + 1) * d);
    }
    c
}

/// Trilinear shape functions of the 8 corners at a reference point.
pub(crate) fn trilinear_shape(xi: [f64; 3]) -> [f64; 8] {
    let mut phi = [0.0; 8];
    for (c, p) in phi.iter_mut().enumerate() {
        let mut v = 1.0;
        for (d, &x) in xi.iter().enumerate() {
            let s = if (c >> d) & 1 == 1 { 1.0 } else { -1.0 };
            v *= 0.5 * (1.0 + s * x);
        }
        *p = v;
    }
    phi
}

/// Derivatives `d phi_c / d xi_a`, indexed `[c][a]`.
pub(crate) fn trilinear_shape_grad(xi: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (c, gc) in g.iter_mut().enumerate() {
        let s: [f64; 3] = std::array::from_fn(|d| if (c >> d) & 1 == 1 { 1.0 } else { -1.0 });
        let h: [f64; 3] = std::array::from_fn(|d| 0.5 * (1.0 + s[d] * xi[d]));
        gc[0] = 0.5 * s[0] * h[1] * h[2];
        gc[1] = 0.5 * s[1] * h[0] * h[2];
        gc[2] = 0.5 * s[2] * h[0] * h[1];
    }
    g
}

impl HexMesh {
    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn bounds(&self) -> BoxBounds {
        self.bounds
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 8]] {
        &self.elements
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Lattice cell `(i, j, k)` of element `e`, decoded from its first corner.
    pub fn element_cell(&self, e: usize) -> [usize; 3] {
        let v0 = self.elements[e][0];
        let nx = self.extents[0] + 1;
        let ny = self.extents[1] + 1;
        [v0 % nx, (v0 / nx) % ny, v0 / (nx * ny)]
    }

    pub fn element_corners(&self, e: usize) -> [[f64; 3]; 8] {
        self.elements[e].map(|v| self.vertices[v])
    }

    /// Applies `map` to every vertex. Connectivity and numbering are untouched.
    pub fn deform_affine(&self, map: &AffineMap) -> Result<HexMesh> {
        let det = map.determinant();
        if !(det > 0.0) {
            return Err(SemError::InvertedMap(det));
        }
        let mut out = self.clone();
        for v in out.vertices.iter_mut() {
            *v = map.apply(*v);
        }
        Ok(out)
    }

    /// Shuffles element storage order. The result discretizes the same
    /// problem; only the memory layout of element-local fields changes.
    pub fn permute_elements(&self, seed: u64) -> HexMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        out.elements.shuffle(&mut rng);
        out
    }

    /// Physical coordinates of every local GLL point, in field order.
    pub fn local_points(&self, order: usize) -> Result<Vec<[f64; 3]>> {
        let (nodes, _, _) = gll_f64(order)?;
        let np = order + 1;
        let mut shapes = Vec::with_capacity(np * np * np);
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    shapes.push(trilinear_shape([nodes[i], nodes[j], nodes[k]]));
                }
            }
        }
        let mut pts = Vec::with_capacity(self.num_elements() * shapes.len());
        for e in 0..self.num_elements() {
            let corners = self.element_corners(e);
            for phi in &shapes {
                let mut x = [0.0; 3];
                for (c, p) in phi.iter().enumerate() {
                    for d in 0..3 {
                        x[d] += p * corners[c][d];
                    }
                }
                pts.push(x);
            }
        }
        Ok(pts)
    }

    /// Checks connectivity against the vertex lattice.
    pub fn validate(&self) -> Result<()> {
        let [ex, ey, ez] = self.extents;
        if ex == 0 || ey == 0 || ez == 0 {
            return Err(SemError::MalformedMesh("zero extent".into()));
        }
        let nv = (ex + 1) * (ey + 1) * (ez + 1);
        if self.vertices.len() != nv {
            return Err(SemError::MalformedMesh(format!(
                "expected {nv} vertices for extents {:?}, found {}",
                self.extents,
                self.vertices.len()
            )));
        }
        if self.elements.len() != ex * ey * ez {
            return Err(SemError::MalformedMesh(format!(
                "expected {} elements, found {}",
                ex * ey * ez,
                self.elements.len()
            )));
        }
        let mut seen = vec![false; ex * ey * ez];
        for (e, conn) in self.elements.iter().enumerate() {
            if conn.iter().any(|&v| v >= nv) {
                return Err(SemError::MalformedMesh(format!(
                    "element {e} references a vertex out of range"
                )));
            }
            let [i, j, k] = self.element_cell(e);
            if i >= ex || j >= ey || k >= ez || *conn != corners_from(conn[0], self.extents) {
                return Err(SemError::MalformedMesh(format!(
                    "element {e} is not a lattice cell in corner order"
                )));
            }
            let cell = i + ex * (j + ey * k);
            if std::mem::replace(&mut seen[cell], true) {
                return Err(SemError::MalformedMesh(format!(
                    "element {e} duplicates lattice cell {:?}",
                    [i, j, k]
                )));
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            format: MESH_FORMAT.into(),
            version: MESH_FORMAT_VERSION,
            extents: self.extents,
            bounds: self.bounds,
            vertices: self.vertices.clone(),
            elements: self.elements.clone(),
        }
    }

    pub fn from_document(doc: MeshDocument) -> Result<HexMesh> {
        if doc.format != MESH_FORMAT || doc.version != MESH_FORMAT_VERSION {
            return Err(SemError::MalformedMesh(format!(
                "unsupported mesh format {} v{}",
                doc.format, doc.version
            )));
        }
        let mesh = HexMesh {
            extents: doc.extents,
            bounds: doc.bounds,
            vertices: doc.vertices,
            elements: doc.elements,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<HexMesh> {
        Self::from_document(serde_json::from_str(s)?)
    }
}

/// On-disk mesh layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub format: String,
    pub version: u32,
    pub extents: [usize; 3],
    pub bounds: BoxBounds,
    pub vertices: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 8]>,
}

/// Global numbering of the local GLL points at a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    order: usize,
    num_elements: usize,
    global_id: Vec<usize>,
    n_unique: usize,
    multiplicity: Vec<u32>,
    inv_mult: Vec<f64>,
    dirichlet_mask: Vec<bool>,
}

/// Numbers points on the refined lattice `cell * N + local`, so shared
/// points match exactly.
pub fn build_dofmap(mesh: &HexMesh, order: usize) -> Result<DofMap> {
    if order < 1 {
        return Err(SemError::InvalidOrder(order));
    }
    let np = order + 1;
    let [ex, ey, ez] = mesh.extents();
    let dims = [ex * order + 1, ey * order + 1, ez * order + 1];
    let n_unique = dims[0] * dims[1] * dims[2];
    let n_local = mesh.num_elements() * np * np * np;

    let mut global_id = Vec::with_capacity(n_local);
    let mut dirichlet_mask = Vec::with_capacity(n_local);
    for e in 0..mesh.num_elements() {
        let cell = mesh.element_cell(e);
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    let g = [
                        cell[0] * order + i,
                        cell[1] * order + j,
                        cell[2] * order + k,
                    ];
                    global_id.push(g[0] + dims[0] * (g[1] + dims[1] * g[2]));
                    dirichlet_mask.push((0..3).any(|d| g[d] == 0 || g[d] == dims[d] - 1));
                }
            }
        }
    }
    let mut counts = vec![0u32; n_unique];
    for &g in &global_id {
        counts[g] += 1;
    }
    let multiplicity: Vec<u32> = global_id.iter().map(|&g| counts[g]).collect();
    let inv_mult = multiplicity.iter().map(|&m| 1.0 / m as f64).collect();
    Ok(DofMap {
        order,
        num_elements: mesh.num_elements(),
        global_id,
        n_unique,
        multiplicity,
        inv_mult,
        dirichlet_mask,
    })
}

impl DofMap {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    /// Number of local points, `n = E (N+1)^3`.
    pub fn len(&self) -> usize {
        self.global_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_id.is_empty()
    }

    pub fn n_unique(&self) -> usize {
        self.n_unique
    }

    pub fn global_id(&self) -> &[usize] {
        &self.global_id
    }

    pub fn multiplicity(&self) -> &[u32] {
        &self.multiplicity
    }

    pub fn inv_mult(&self) -> &[f64] {
        &self.inv_mult
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet_mask
    }

    /// Unique points on the domain boundary.
    pub fn n_boundary_unique(&self) -> usize {
        let mut on = vec![false; self.n_unique];
        for (g, &m) in self.global_id.iter().zip(&self.dirichlet_mask) {
            on[*g] |= m;
        }
        on.iter().filter(|&&b| b).count()
    }
}
