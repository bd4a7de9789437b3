//! Dense small tensors and left-to-right boundary contraction of the grid
//! network: one column per machine, input vector at the bottom, one site per
//! crossing rule layer stacked above it, and a plug on top.
//!
//! Site tensors always use the geometric index order
//! `[vertical_in, vertical_out, horizontal_left, horizontal_right]`.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        DenseTensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_data(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero extent in {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite tensor entry".into()));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &e)| {
                debug_assert!(i < e);
                acc * e + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let k = self.offset(index);
        self.data[k] = value;
    }

    /// Nonzero entries in row-major order.
    pub fn nonzeros(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        for (flat, &v) in self.data.iter().enumerate() {
            if v != 0.0 {
                out.push((self.unravel(flat), v));
            }
        }
        out
    }

    fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.shape.len()];
        for (slot, &e) in index.iter_mut().zip(&self.shape).rev() {
            *slot = flat % e;
            flat /= e;
        }
        index
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        DenseTensor::from_data(shape, self.data)
    }

    /// Reorders axes: output axis `k` is input axis `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> DenseTensor {
        assert_eq!(axes.len(), self.shape.len());
        let shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let mut out = DenseTensor::zeros(shape);
        for (flat, &v) in self.data.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let src = self.unravel(flat);
            let dst: Vec<usize> = axes.iter().map(|&a| src[a]).collect();
            out.set(&dst, v);
        }
        out
    }

    /// Drops every axis of extent 1.
    pub fn squeeze(&self) -> DenseTensor {
        let shape: Vec<usize> = self.shape.iter().copied().filter(|&e| e != 1).collect();
        DenseTensor {
            shape,
            data: self.data.clone(),
        }
    }
}

/// A four-index site tensor with a sparse lookup table over its nonzeros.
#[derive(Debug, Clone)]
pub struct SiteTensor {
    tensor: DenseTensor,
    /// `table[v_in * left + l]` lists `(v_out, r, value)`.
    table: Vec<Vec<(usize, usize, f64)>>,
}

impl SiteTensor {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        let s = tensor.shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "site tensors need 4 indices, got shape {s:?}"
            )));
        }
        if s[0] != s[1] {
            return Err(Error::Shape(format!(
                "vertical extents differ: {} vs {}",
                s[0], s[1]
            )));
        }
        let (p, hl, hr) = (s[0], s[2], s[3]);
        let mut table = vec![Vec::new(); p * hl];
        for v_in in 0..p {
            for v_out in 0..p {
                for l in 0..hl {
                    for r in 0..hr {
                        let value = tensor.get(&[v_in, v_out, l, r]);
                        if value != 0.0 {
                            table[v_in * hl + l].push((v_out, r, value));
                        }
                    }
                }
            }
        }
        Ok(SiteTensor { tensor, table })
    }

    /// Identity on the vertical index, passing channel `j` to channel `j`.
    pub fn identity(vertical: usize, horizontal: usize) -> Self {
        let mut t = DenseTensor::zeros(vec![vertical, vertical, horizontal, horizontal]);
        for i in 0..vertical {
            for j in 0..horizontal {
                t.set(&[i, i, j, j], 1.0);
            }
        }
        SiteTensor::new(t).expect("identity site is well formed")
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn vertical(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn left(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn right(&self) -> usize {
        self.tensor.shape()[3]
    }

    fn entries(&self, v_in: usize, l: usize) -> &[(usize, usize, f64)] {
        &self.table[v_in * self.left() + l]
    }

    /// The same site seen from the other side of the network.
    pub fn mirrored(&self) -> SiteTensor {
        SiteTensor::new(self.tensor.permute(&[0, 1, 3, 2])).expect("permuted site is well formed")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plug {
    /// Contract the top index with the all-ones vector.
    Trace,
    /// Leave the top index open; the result carries it.
    Open,
    /// Contract the top index with an arbitrary vector.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct LayerSite {
    pub layer: usize,
    pub tensor: Arc<SiteTensor>,
}

/// One machine's stack: input vector, sites bottom to top, and top plug.
#[derive(Debug, Clone)]
pub struct SiteColumn {
    pub input: Vec<f64>,
    pub sites: Vec<LayerSite>,
    pub plug: Plug,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub layer_count: usize,
    pub columns: Vec<SiteColumn>,
}

/// Tensor over the horizontal channels crossing one cut, optionally with a
/// trailing open vertical index.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub extents: Vec<usize>,
    pub open: Option<usize>,
    pub data: Vec<f64>,
}

impl Boundary {
    pub fn trivial(layer_count: usize) -> Self {
        Boundary {
            extents: vec![1; layer_count],
            open: None,
            data: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Sizes observed while contracting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContractionStats {
    /// Largest boundary, in elements.
    pub max_boundary: usize,
    /// Largest intermediate tensor materialized inside a column, in elements.
    pub max_intermediate: usize,
}

impl ContractionStats {
    pub fn merge(&mut self, other: ContractionStats) {
        self.max_boundary = self.max_boundary.max(other.max_boundary);
        self.max_intermediate = self.max_intermediate.max(other.max_intermediate);
    }
}

pub fn contract_column(boundary: &Boundary, column: &SiteColumn) -> Result<Boundary> {
    contract_column_tracked(boundary, column, &mut ContractionStats::default())
}

fn contract_column_tracked(
    boundary: &Boundary,
    column: &SiteColumn,
    stats: &mut ContractionStats,
) -> Result<Boundary> {
    let p = column.input.len();
    if p == 0 {
        return Err(Error::Shape("empty input vector".into()));
    }
    let expected: usize = boundary.extents.iter().product::<usize>() * boundary.open.unwrap_or(1);
    if expected != boundary.data.len() {
        return Err(Error::Shape(format!(
            "boundary holds {} entries, extents imply {expected}",
            boundary.data.len()
        )));
    }
    let open = boundary.open.unwrap_or(1);
    let mut extents = boundary.extents.clone();

    let inner = boundary.data.len();
    let mut work = vec![0.0; p * inner];
    for (v, &a) in column.input.iter().enumerate() {
        if a != 0.0 {
            for (dst, &b) in work[v * inner..(v + 1) * inner].iter_mut().zip(&boundary.data) {
                *dst = a * b;
            }
        }
    }
    stats.max_intermediate = stats.max_intermediate.max(work.len());

    for site in &column.sites {
        let k = site.layer;
        let t = &site.tensor;
        if k >= extents.len() {
            return Err(Error::Shape(format!(
                "site references layer {k}, network has {}",
                extents.len()
            )));
        }
        if t.vertical() != p {
            return Err(Error::Shape(format!(
                "site vertical extent {} differs from column extent {p}",
                t.vertical()
            )));
        }
        if t.left() != extents[k] {
            return Err(Error::Shape(format!(
                "layer {k}: boundary channel extent {} but site expects {}",
                extents[k],
                t.left()
            )));
        }
        let before: usize = extents[..k].iter().product();
        let lk = extents[k];
        let rk = t.right();
        let after: usize = extents[k + 1..].iter().product::<usize>() * open;
        let mut next = vec![0.0; p * before * rk * after];
        for v in 0..p {
            for l in 0..lk {
                let entries = t.entries(v, l);
                if entries.is_empty() {
                    continue;
                }
                for a in 0..before {
                    let src = ((v * before + a) * lk + l) * after;
                    let src_slice = &work[src..src + after];
                    if src_slice.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    for &(vo, r, value) in entries {
                        let dst = ((vo * before + a) * rk + r) * after;
                        for (d, &s) in next[dst..dst + after].iter_mut().zip(src_slice) {
                            *d += value * s;
                        }
                    }
                }
            }
        }
        extents[k] = rk;
        work = next;
        stats.max_intermediate = stats.max_intermediate.max(work.len());
    }

    let inner = work.len() / p;
    let (data, open_out) = match &column.plug {
        Plug::Trace => {
            let mut out = vec![0.0; inner];
            for v in 0..p {
                for (o, &w) in out.iter_mut().zip(&work[v * inner..(v + 1) * inner]) {
                    *o += w;
                }
            }
            (out, boundary.open)
        }
        Plug::Vector(u) => {
            if u.len() != p {
                return Err(Error::Shape(format!(
                    "plug vector has length {}, column extent is {p}",
                    u.len()
                )));
            }
            let mut out = vec![0.0; inner];
            for (v, &uv) in u.iter().enumerate() {
                if uv == 0.0 {
                    continue;
                }
                for (o, &w) in out.iter_mut().zip(&work[v * inner..(v + 1) * inner]) {
                    *o += uv * w;
                }
            }
            (out, boundary.open)
        }
        Plug::Open => {
            if boundary.open.is_some() {
                return Err(Error::Shape("more than one open column".into()));
            }
            let mut out = vec![0.0; inner * p];
            for v in 0..p {
                for i in 0..inner {
                    out[i * p + v] = work[v * inner + i];
                }
            }
            (out, Some(p))
        }
    };
    stats.max_boundary = stats.max_boundary.max(data.len());
    Ok(Boundary {
        extents,
        open: open_out,
        data,
    })
}

/// Result of contracting a whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    /// A single entry when every plug was closed, otherwise the open column's
    /// amplitudes.
    pub values: Vec<f64>,
    pub open: bool,
    pub stats: ContractionStats,
}

impl Contraction {
    pub fn scalar(&self) -> f64 {
        debug_assert!(!self.open);
        self.values[0]
    }
}

pub fn full_contract(network: &Network) -> Result<Contraction> {
    let mut stats = ContractionStats::default();
    let mut boundary = Boundary::trivial(network.layer_count);
    for column in &network.columns {
        boundary = contract_column_tracked(&boundary, column, &mut stats)?;
    }
    if boundary.extents.iter().any(|&e| e != 1) {
        return Err(Error::Shape(format!(
            "dangling horizontal channels at the right edge: {:?}",
            boundary.extents
        )));
    }
    Ok(Contraction {
        open: boundary.open.is_some(),
        values: boundary.data,
        stats,
    })
}

impl Network {
    /// Largest intermediate (in elements) a left-to-right contraction will
    /// materialize, computed from shapes alone.
    pub fn projected_peak(&self) -> u128 {
        let mut extents = vec![1u128; self.layer_count];
        let mut open = 1u128;
        let mut peak = 1u128;
        for column in &self.columns {
            let p = column.input.len() as u128;
            let mut prod: u128 = extents.iter().product::<u128>() * open;
            peak = peak.max(p * prod);
            for site in &column.sites {
                if let Some(e) = extents.get_mut(site.layer) {
                    prod = prod / *e * site.tensor.right() as u128;
                    *e = site.tensor.right() as u128;
                }
                peak = peak.max(p * prod);
            }
            if column.plug == Plug::Open {
                open = p;
                peak = peak.max(prod * p);
            }
        }
        peak
    }

    /// The network read right to left.
    pub fn mirrored(&self) -> Network {
        let columns = self
            .columns
            .iter()
            .rev()
            .map(|c| SiteColumn {
                input: c.input.clone(),
                sites: c
                    .sites
                    .iter()
                    .map(|s| LayerSite {
                        layer: s.layer,
                        tensor: Arc::new(s.tensor.mirrored()),
                    })
                    .collect(),
                plug: c.plug.clone(),
            })
            .collect();
        Network {
            layer_count: self.layer_count,
            columns,
        }
    }
}

/// `<x|R|x>`: inputs and plugs replaced by basis vectors at `x`.
pub fn apply_operator_to_basis(network: &Network, x: &[usize]) -> Result<f64> {
    operator_element(network, x, x)
}

/// `<bra|R|ket>` with every input replaced by the `ket` basis vector and
/// every plug by the `bra` one.
pub fn operator_element(network: &Network, bra: &[usize], ket: &[usize]) -> Result<f64> {
    let n = network.columns.len();
    if bra.len() != n || ket.len() != n {
        return Err(Error::Shape(format!(
            "basis states have {} and {} entries, network has {n} columns",
            bra.len(),
            ket.len()
        )));
    }
    let basis = |i: usize, p: usize| {
        if i >= p {
            return Err(Error::Shape(format!("basis index {i} out of range {p}")));
        }
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        Ok(e)
    };
    let columns = network
        .columns
        .iter()
        .zip(bra.iter().zip(ket))
        .map(|(c, (&b, &k))| {
            let p = c.input.len();
            Ok(SiteColumn {
                input: basis(k, p)?,
                sites: c.sites.clone(),
                plug: Plug::Vector(basis(b, p)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Network {
        layer_count: network.layer_count,
        columns,
    };
    Ok(full_contract(&net)?.scalar())
}
