//! Nonlocal patch graphs over images, plus the two initializers used by the
//! inpainting pipeline.
//!
//! Every pixel is a vertex (row-major ids). Edge weights come from patch
//! similarity: for pixels `x` and `y` the squared patch distance `d2` turns
//! into `w = exp(-d2 * (1/sigma_x^2 + 1/sigma_y^2))`, each pixel keeps its
//! `K` strongest candidates inside a square search window, and the union of
//! those choices (optionally merged with a plain 4-neighbor grid) forms the
//! graph. Known pixels become boundary vertices.
//!
//! Patch distances are computed one window offset at a time: for a fixed
//! offset the per-pixel squared differences form a plane whose summed-area
//! table yields every patch box sum in O(1), and both pixels of a pair read
//! the same box sum, so weights are exactly symmetric.

use std::collections::BinaryHeap;
use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::{BoundaryData, FunctionError, InteriorInit, VertexFunction};
use crate::graph::{GraphError, GraphOptions, WeightedGraph};
use crate::image_io::RawImage;
use crate::plap::{newton_minimize, SolverConfig};

#[derive(Debug, Error)]
pub enum NonlocalError {
    #[error("bad patch graph parameters: {0}")]
    BadParams(String),
    #[error("need at least {need} known pixels, got {got}")]
    TooFewKnownPixels { need: usize, got: usize },
    #[error("layered fill stalled with {remaining} pixels still unknown")]
    StalledFrontier { remaining: usize },
    #[error("inner solve during layered fill failed: {0}")]
    InnerSolve(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Function(#[from] FunctionError),
}

/// How per-pixel similarity bandwidths are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPolicy {
    /// `sigma_x` = distance to the k-th nearest patch (largest finite
    /// distance if fewer than `k` are finite).
    Knn { k: usize },
    /// One global bandwidth.
    Fixed { sigma: f64 },
}

impl Default for SigmaPolicy {
    fn default() -> Self {
        SigmaPolicy::Knn { k: 20 }
    }
}

/// Which distance the builder uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskVariant {
    /// Full-patch distance plus a quadratic locality penalty; meant for
    /// scattered missing pixels where every patch still has content.
    RandomMask,
    /// Distance restricted to positions known in both patches, rescaled by
    /// patch_area/overlap; pairs overlapping less than `min_overlap` are
    /// not connected. No locality term.
    HoleMask,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchGraphParams {
    /// Patch radius; patches are `(2r+1) x (2r+1)`.
    pub r: usize,
    /// Search window radius (Chebyshev); must exceed `r`.
    #[serde(rename = "R")]
    pub search_radius: usize,
    /// Nearest-neighbor candidates kept per pixel before symmetrization.
    #[serde(rename = "K")]
    pub top_k: usize,
    /// Locality penalty coefficient (random-mask variant only).
    pub c: f64,
    pub sigma_policy: SigmaPolicy,
    /// Minimum fraction of patch positions known in both patches for a
    /// hole-mask pair to be considered.
    pub min_overlap: f64,
    /// Merge a 4-neighbor grid into the nonlocal edges (weights combine by
    /// maximum).
    pub add_local_grid: bool,
    pub variant: MaskVariant,
    /// Weight of the merged grid edges.
    pub local_grid_weight: f64,
    /// How many outer pipeline iterations keep the grid merged in.
    pub local_grid_iters: usize,
}

impl Default for PatchGraphParams {
    fn default() -> Self {
        PatchGraphParams {
            r: 5,
            search_radius: 30,
            top_k: 40,
            c: 9.0,
            sigma_policy: SigmaPolicy::default(),
            min_overlap: 0.10,
            add_local_grid: true,
            variant: MaskVariant::RandomMask,
            local_grid_weight: 0.5,
            local_grid_iters: 3,
        }
    }
}

impl PatchGraphParams {
    /// Stock parameters for contiguous holes.
    pub fn hole_defaults() -> Self {
        PatchGraphParams {
            r: 7,
            search_radius: 45,
            top_k: 45,
            c: 0.0,
            sigma_policy: SigmaPolicy::Fixed { sigma: 0.045 },
            variant: MaskVariant::HoleMask,
            ..PatchGraphParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), NonlocalError> {
        if self.r < 1 {
            return Err(NonlocalError::BadParams("r must be >= 1".into()));
        }
        if self.search_radius <= self.r {
            return Err(NonlocalError::BadParams(format!(
                "search radius R = {} must exceed patch radius r = {}",
                self.search_radius, self.r
            )));
        }
        if self.top_k < 1 {
            return Err(NonlocalError::BadParams("K must be >= 1".into()));
        }
        if !(self.c >= 0.0) {
            return Err(NonlocalError::BadParams(format!(
                "c = {} must be >= 0",
                self.c
            )));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(NonlocalError::BadParams(format!(
                "min_overlap = {} outside (0, 1]",
                self.min_overlap
            )));
        }
        if !(self.local_grid_weight > 0.0 && self.local_grid_weight <= 1.0) {
            return Err(NonlocalError::BadParams(format!(
                "local_grid_weight = {} outside (0, 1]",
                self.local_grid_weight
            )));
        }
        match self.sigma_policy {
            SigmaPolicy::Knn { k } if k < 1 => {
                return Err(NonlocalError::BadParams("knn k must be >= 1".into()))
            }
            SigmaPolicy::Fixed { sigma } if !(sigma > 0.0) => {
                return Err(NonlocalError::BadParams(format!(
                    "fixed sigma = {sigma} must be > 0"
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

/// An image with a known/unknown pixel mask; the unit the pipeline and the
/// graph builder operate on.
#[derive(Debug, Clone)]
pub struct MaskedImage {
    pub height: usize,
    pub width: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    /// Row-major, channel-interleaved samples in [0, 1].
    pub pixels: Vec<f64>,
    /// Row-major; `true` marks a known pixel.
    pub known: Vec<bool>,
}

impl MaskedImage {
    pub fn new(image: &RawImage, known: Vec<bool>) -> Result<Self, NonlocalError> {
        if image.channels != 1 && image.channels != 3 {
            return Err(NonlocalError::BadParams(format!(
                "images must have 1 or 3 channels, got {}",
                image.channels
            )));
        }
        if known.len() != image.height * image.width {
            return Err(NonlocalError::BadParams(format!(
                "mask length {} does not match {}x{} image",
                known.len(),
                image.height,
                image.width
            )));
        }
        let known_count = known.iter().filter(|&&k| k).count();
        if known_count == 0 {
            return Err(NonlocalError::BadParams("no known pixels".into()));
        }
        if known_count == known.len() {
            return Err(NonlocalError::BadParams("no unknown pixels".into()));
        }
        if image.data.iter().any(|x| !(*x >= 0.0 && *x <= 1.0)) {
            return Err(NonlocalError::BadParams(
                "pixel values must lie in [0, 1]".into(),
            ));
        }
        Ok(MaskedImage {
            height: image.height,
            width: image.width,
            channels: image.channels,
            pixels: image.data.clone(),
            known,
        })
    }

    /// Same mask, new pixel values.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self, NonlocalError> {
        self.to_image_with(pixels).map(|img| MaskedImage {
            pixels: img.data,
            ..self.clone()
        })
    }

    fn to_image_with(&self, pixels: Vec<f64>) -> Result<RawImage, NonlocalError> {
        if pixels.len() != self.pixels.len() {
            return Err(NonlocalError::BadParams(format!(
                "pixel buffer length {} does not match {}",
                pixels.len(),
                self.pixels.len()
            )));
        }
        if pixels.iter().any(|x| !(*x >= 0.0 && *x <= 1.0)) {
            return Err(NonlocalError::BadParams(
                "pixel values must lie in [0, 1]".into(),
            ));
        }
        Ok(RawImage::new(self.height, self.width, self.channels, pixels))
    }

    pub fn vertex(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn pixel_of(&self, v: usize) -> (usize, usize) {
        (v / self.width, v % self.width)
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let base = (row * self.width + col) * self.channels;
        &self.pixels[base..base + self.channels]
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn to_image(&self) -> RawImage {
        RawImage::new(
            self.height,
            self.width,
            self.channels,
            self.pixels.clone(),
        )
    }

    /// Boundary data holding the known pixel values, keyed by vertex id.
    pub fn boundary_data(&self) -> BoundaryData {
        let mut g = BoundaryData::new(self.channels);
        for v in 0..self.height * self.width {
            if self.known[v] {
                let base = v * self.channels;
                g.insert(v, self.pixels[base..base + self.channels].to_vec())
                    .expect("vertex ids are distinct by construction");
            }
        }
        g
    }
}

/// Reflect an index into `[0, n)` without repeating the border sample
/// (reflect-101): -1 maps to 1, n maps to n-2.
fn reflect101(idx: isize, n: usize) -> usize {
    debug_assert!(n >= 1);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = idx % period;
    if m < 0 {
        m += period;
    }
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

fn locality(c: f64, di: isize, dj: isize, height: usize, width: usize) -> f64 {
    let a = di as f64 / height as f64;
    let b = dj as f64 / width as f64;
    c * (a * a + b * b)
}

/// Deterministic per-pair hash used only to break exact weight ties.
fn tie_hash(seed: u64, a: usize, b: usize) -> u64 {
    let mut x = seed
        ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-offset scratch: difference plane over the mirror-padded domain, its
/// summed-area table, and the resulting per-pixel patch box sums.
struct PlaneWorkspace {
    plane: Vec<f64>,
    cplane: Vec<f64>,
    sat: Vec<f64>,
    csat: Vec<f64>,
    /// Box sum of `plane` for the patch at each pixel.
    ssd: Vec<f64>,
    /// Box sum of `cplane` (both-known position counts; hole variant).
    overlap: Vec<f64>,
    rowmap0: Vec<usize>,
    colmap0: Vec<usize>,
    rowmapd: Vec<usize>,
    colmapd: Vec<usize>,
}

impl PlaneWorkspace {
    fn new(img: &MaskedImage, r: usize) -> Self {
        let hp = img.height + 2 * r;
        let wp = img.width + 2 * r;
        PlaneWorkspace {
            plane: vec![0.0; hp * wp],
            cplane: vec![0.0; hp * wp],
            sat: vec![0.0; (hp + 1) * (wp + 1)],
            csat: vec![0.0; (hp + 1) * (wp + 1)],
            ssd: vec![0.0; img.height * img.width],
            overlap: vec![0.0; img.height * img.width],
            rowmap0: vec![0; hp],
            colmap0: vec![0; wp],
            rowmapd: vec![0; hp],
            colmapd: vec![0; wp],
        }
    }

    /// Fill the planes and box sums for window offset `(di, dj)`.
    fn compute(&mut self, img: &MaskedImage, params: &PatchGraphParams, di: isize, dj: isize) {
        let (h, w, m) = (img.height, img.width, img.channels);
        let r = params.r as isize;
        let hp = h + 2 * params.r;
        let wp = w + 2 * params.r;
        for pu in 0..hp {
            self.rowmap0[pu] = reflect101(pu as isize - r, h);
            self.rowmapd[pu] = reflect101(pu as isize - r + di, h);
        }
        for pc in 0..wp {
            self.colmap0[pc] = reflect101(pc as isize - r, w);
            self.colmapd[pc] = reflect101(pc as isize - r + dj, w);
        }
        let hole = params.variant == MaskVariant::HoleMask;
        let fill_row = |pu: usize, row: &mut [f64], crow: &mut [f64]| {
            let r0 = self.rowmap0[pu];
            let rd = self.rowmapd[pu];
            for pc in 0..wp {
                let c0 = self.colmap0[pc];
                let cd = self.colmapd[pc];
                let a = (r0 * w + c0) * m;
                let b = (rd * w + cd) * m;
                let mut s = 0.0;
                for ch in 0..m {
                    let d = img.pixels[a + ch] - img.pixels[b + ch];
                    s += d * d;
                }
                if hole {
                    let both = img.known[r0 * w + c0] && img.known[rd * w + cd];
                    row[pc] = if both { s } else { 0.0 };
                    crow[pc] = if both { 1.0 } else { 0.0 };
                } else {
                    row[pc] = s;
                }
            }
        };
        if hp >= 64 {
            self.plane
                .par_chunks_mut(wp)
                .zip(self.cplane.par_chunks_mut(wp))
                .enumerate()
                .for_each(|(pu, (row, crow))| fill_row(pu, row, crow));
        } else {
            for (pu, (row, crow)) in self
                .plane
                .chunks_mut(wp)
                .zip(self.cplane.chunks_mut(wp))
                .enumerate()
            {
                fill_row(pu, row, crow);
            }
        }

        build_sat(&self.plane, hp, wp, &mut self.sat);
        if hole {
            build_sat(&self.cplane, hp, wp, &mut self.csat);
        }
        let side = 2 * params.r + 1;
        for i in 0..h {
            for j in 0..w {
                self.ssd[i * w + j] = box_sum(&self.sat, wp, i, j, side);
                if hole {
                    self.overlap[i * w + j] = box_sum(&self.csat, wp, i, j, side);
                }
            }
        }
    }

    /// Squared distance for the pair `(x, x + delta)`, `x` given by pixel
    /// index; `None` when the pair is not admissible.
    fn distance2(
        &self,
        img: &MaskedImage,
        params: &PatchGraphParams,
        x: usize,
        di: isize,
        dj: isize,
    ) -> Option<f64> {
        match params.variant {
            MaskVariant::RandomMask => {
                Some(self.ssd[x] + locality(params.c, di, dj, img.height, img.width))
            }
            MaskVariant::HoleMask => {
                let area = ((2 * params.r + 1) * (2 * params.r + 1)) as f64;
                let cnt = self.overlap[x];
                if cnt >= params.min_overlap * area && cnt > 0.0 {
                    Some(self.ssd[x] * (area / cnt))
                } else {
                    None
                }
            }
        }
    }
}

fn build_sat(plane: &[f64], h: usize, w: usize, sat: &mut [f64]) {
    let stride = w + 1;
    for j in 0..=w {
        sat[j] = 0.0;
    }
    for i in 0..h {
        sat[(i + 1) * stride] = 0.0;
        let mut rowsum = 0.0;
        for j in 0..w {
            rowsum += plane[i * w + j];
            sat[(i + 1) * stride + j + 1] = sat[i * stride + j + 1] + rowsum;
        }
    }
}

/// Sum of a `side x side` box whose top-left corner in padded coordinates
/// equals the pixel coordinates `(i, j)`.
fn box_sum(sat: &[f64], wp: usize, i: usize, j: usize, side: usize) -> f64 {
    let stride = wp + 1;
    sat[(i + side) * stride + j + side] - sat[i * stride + j + side]
        - sat[(i + side) * stride + j]
        + sat[i * stride + j]
}

/// Candidate edge kept by the per-pixel top-K selection. The heap keeps the
/// worst candidate on top: lower weight is "greater", ties broken by the
/// pair hash and then the partner id.
#[derive(Clone, Copy, PartialEq)]
struct Cand {
    w: f64,
    tie: u64,
    v: usize,
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .w
            .partial_cmp(&self.w)
            .expect("weights are finite")
            .then(self.tie.cmp(&other.tie))
            .then(self.v.cmp(&other.v))
    }
}

/// Iterate the canonical half of the search window: each unordered offset
/// pair `{delta, -delta}` appears exactly once.
fn canonical_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dj in 1..=r {
        out.push((0, dj));
    }
    for di in 1..=r {
        for dj in -r..=r {
            out.push((di, dj));
        }
    }
    out
}

fn inverse_sigma2(img: &MaskedImage, params: &PatchGraphParams) -> Vec<f64> {
    let (h, w) = (img.height, img.width);
    let n = h * w;
    match params.sigma_policy {
        SigmaPolicy::Fixed { sigma } => {
            let s = sigma.max(1e-12);
            vec![1.0 / (s * s); n]
        }
        SigmaPolicy::Knn { k } => {
            // Max-heaps of the k smallest squared distances, as raw bits
            // (nonnegative finite doubles order like their bit patterns).
            let mut heaps: Vec<BinaryHeap<u64>> = vec![BinaryHeap::new(); n];
            let mut ws = PlaneWorkspace::new(img, params.r);
            for (di, dj) in canonical_offsets(params.search_radius) {
                ws.compute(img, params, di, dj);
                let emit = |zi: usize, row: &mut [BinaryHeap<u64>]| {
                    for (zj, heap) in row.iter_mut().enumerate() {
                        let mut push = |d2: f64| {
                            heap.push(d2.to_bits());
                            if heap.len() > k {
                                heap.pop();
                            }
                        };
                        let (fi, fj) = (zi as isize + di, zj as isize + dj);
                        if fi < h as isize && fj >= 0 && fj < w as isize {
                            if let Some(d2) =
                                ws.distance2(img, params, zi * w + zj, di, dj)
                            {
                                push(d2);
                            }
                        }
                        let (bi, bj) = (zi as isize - di, zj as isize - dj);
                        if bi >= 0 && bj >= 0 && bj < w as isize {
                            let x = bi as usize * w + bj as usize;
                            if let Some(d2) = ws.distance2(img, params, x, di, dj) {
                                push(d2);
                            }
                        }
                    }
                };
                if n >= 4096 {
                    heaps
                        .par_chunks_mut(w)
                        .enumerate()
                        .for_each(|(zi, row)| emit(zi, row));
                } else {
                    for (zi, row) in heaps.chunks_mut(w).enumerate() {
                        emit(zi, row);
                    }
                }
            }
            heaps
                .into_iter()
                .map(|heap| match heap.peek() {
                    // k-th smallest when full, largest finite otherwise.
                    Some(&bits) => {
                        let s = f64::from_bits(bits).sqrt().max(1e-12);
                        1.0 / (s * s)
                    }
                    // No finite distances: every pair through this pixel is
                    // inadmissible, so the value is never multiplied into a
                    // kept weight.
                    None => f64::NAN,
                })
                .collect()
        }
    }
}

fn nonlocal_candidates(
    img: &MaskedImage,
    params: &PatchGraphParams,
    seed: u64,
) -> Vec<BinaryHeap<Cand>> {
    let (h, w) = (img.height, img.width);
    let n = h * w;
    let inv2 = inverse_sigma2(img, params);
    let mut kept: Vec<BinaryHeap<Cand>> = vec![BinaryHeap::new(); n];
    let mut ws = PlaneWorkspace::new(img, params.r);
    for (di, dj) in canonical_offsets(params.search_radius) {
        ws.compute(img, params, di, dj);
        let emit = |zi: usize, row: &mut [BinaryHeap<Cand>]| {
            for (zj, heap) in row.iter_mut().enumerate() {
                let z = zi * w + zj;
                let mut push = |d2: f64, other: usize| {
                    let weight = (-d2 * (inv2[z] + inv2[other])).exp();
                    if weight > 0.0 {
                        heap.push(Cand {
                            w: weight,
                            tie: tie_hash(seed, z.min(other), z.max(other)),
                            v: other,
                        });
                        if heap.len() > params.top_k {
                            heap.pop();
                        }
                    }
                };
                let (fi, fj) = (zi as isize + di, zj as isize + dj);
                if fi < h as isize && fj >= 0 && fj < w as isize {
                    if let Some(d2) = ws.distance2(img, params, z, di, dj) {
                        push(d2, fi as usize * w + fj as usize);
                    }
                }
                let (bi, bj) = (zi as isize - di, zj as isize - dj);
                if bi >= 0 && bj >= 0 && bj < w as isize {
                    let x = bi as usize * w + bj as usize;
                    if let Some(d2) = ws.distance2(img, params, x, di, dj) {
                        push(d2, x);
                    }
                }
            }
        };
        if n >= 4096 {
            kept.par_chunks_mut(w)
                .enumerate()
                .for_each(|(zi, row)| emit(zi, row));
        } else {
            for (zi, row) in kept.chunks_mut(w).enumerate() {
                emit(zi, row);
            }
        }
    }
    kept
}

fn assemble_edges(
    img: &MaskedImage,
    params: &PatchGraphParams,
    seed: u64,
    with_grid: bool,
) -> Vec<(usize, usize, f64)> {
    let (h, w) = (img.height, img.width);
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (z, heap) in nonlocal_candidates(img, params, seed).into_iter().enumerate() {
        for cand in heap {
            let key = (z.min(cand.v), z.max(cand.v));
            // Both endpoints computed the identical weight, so collisions
            // are plain overwrites.
            map.insert(key, cand.w);
        }
    }
    if with_grid {
        let gw = params.local_grid_weight;
        for i in 0..h {
            for j in 0..w {
                let u = i * w + j;
                if j + 1 < w {
                    let e = map.entry((u, u + 1)).or_insert(0.0);
                    *e = e.max(gw);
                }
                if i + 1 < h {
                    let e = map.entry((u, u + w)).or_insert(0.0);
                    *e = e.max(gw);
                }
            }
        }
    }
    map.into_iter().map(|((u, v), wt)| (u, v, wt)).collect()
}

/// Builds the nonlocal patch graph of a masked image. Known pixels become
/// boundary vertices. If the nonlocal edges alone leave the graph
/// disconnected and no local grid was requested, the build retries once
/// with the grid merged in.
pub fn build_patch_graph(
    img: &MaskedImage,
    params: &PatchGraphParams,
    seed: u64,
) -> Result<Arc<WeightedGraph>, NonlocalError> {
    params.validate()?;
    let n = img.height * img.width;
    let boundary: Vec<usize> = (0..n).filter(|&v| img.known[v]).collect();
    let mut with_grid = params.add_local_grid;
    loop {
        let edges = assemble_edges(img, params, seed, with_grid);
        match WeightedGraph::build(&edges, &boundary, &GraphOptions::default()) {
            Ok(g) if g.vertex_count() == n => return Ok(Arc::new(g)),
            Ok(_) | Err(GraphError::DisconnectedGraph) if !with_grid => {
                with_grid = true;
            }
            Ok(_) => return Err(NonlocalError::Graph(GraphError::DisconnectedGraph)),
            Err(e) => return Err(NonlocalError::Graph(e)),
        }
    }
}

/// Fills the unknown pixels with draws from a Gaussian fitted to the known
/// pixels (sample mean and covariance, small diagonal ridge), clamped to
/// [0, 1]. Needs at least `channels + 1` known pixels. If the known pixels
/// are exactly constant, the unknowns are set to that constant.
pub fn init_random_gaussian(img: &MaskedImage, seed: u64) -> Result<RawImage, NonlocalError> {
    let m = img.channels;
    let n = img.height * img.width;
    let known_ids: Vec<usize> = (0..n).filter(|&v| img.known[v]).collect();
    if known_ids.len() < m + 1 {
        return Err(NonlocalError::TooFewKnownPixels {
            need: m + 1,
            got: known_ids.len(),
        });
    }
    let kn = known_ids.len() as f64;
    let mut mean = vec![0.0f64; m];
    for &v in &known_ids {
        for ch in 0..m {
            mean[ch] += img.pixels[v * m + ch];
        }
    }
    for x in &mut mean {
        *x /= kn;
    }
    let mut cov = vec![0.0f64; m * m];
    for &v in &known_ids {
        for a in 0..m {
            let da = img.pixels[v * m + a] - mean[a];
            for b in 0..m {
                let db = img.pixels[v * m + b] - mean[b];
                cov[a * m + b] += da * db;
            }
        }
    }
    for x in &mut cov {
        *x /= kn - 1.0;
    }

    let mut out = img.pixels.clone();
    if cov.iter().all(|&x| x == 0.0) {
        for v in 0..n {
            if !img.known[v] {
                out[v * m..v * m + m].copy_from_slice(&mean);
            }
        }
        return Ok(RawImage::new(img.height, img.width, m, out));
    }

    for d in 0..m {
        cov[d * m + d] += 1e-8;
    }
    let l = cholesky(m, &cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0f64; m];
    for v in 0..n {
        if img.known[v] {
            continue;
        }
        standard_normals(&mut rng, &mut z);
        for a in 0..m {
            let mut x = mean[a];
            for b in 0..=a {
                x += l[a * m + b] * z[b];
            }
            out[v * m + a] = x.clamp(0.0, 1.0);
        }
    }
    Ok(RawImage::new(img.height, img.width, m, out))
}

fn cholesky(m: usize, a: &[f64]) -> Vec<f64> {
    let mut l = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                l[i * m + i] = s.max(0.0).sqrt();
            } else if l[j * m + j] > 0.0 {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    l
}

fn standard_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out {
        *x = rng.sample(rand_distr::StandardNormal);
    }
}

/// Result of the layered fill: the completed image and how many frontier
/// layers it took.
#[derive(Debug, Clone)]
pub struct FillResult {
    pub image: RawImage,
    pub layers: usize,
}

/// Fills a contiguous hole inward layer by layer: each round takes the
/// unknown pixels that touch a known 4-neighbor, solves for their values on
/// the local grid around them (one solve per connected component), marks
/// them known, and repeats.
pub fn init_layered_fill(img: &MaskedImage) -> Result<FillResult, NonlocalError> {
    init_layered_fill_with(img, |graph, g| {
        let f0 = VertexFunction::from_boundary(graph, g, InteriorInit::BoundaryMean)
            .map_err(|e| e.to_string())?;
        let cfg = SolverConfig::default();
        newton_minimize(&f0, 2.0, &cfg)
            .map(|r| r.function)
            .map_err(|e| e.to_string())
    })
}

/// As [`init_layered_fill`], with a caller-provided solver for each
/// frontier component (graph with the component's known pixels as boundary).
pub fn init_layered_fill_with<F>(
    img: &MaskedImage,
    mut solve: F,
) -> Result<FillResult, NonlocalError>
where
    F: FnMut(&Arc<WeightedGraph>, &BoundaryData) -> Result<VertexFunction, String>,
{
    let (h, w, m) = (img.height, img.width, img.channels);
    let n = h * w;
    let mut known = img.known.clone();
    let mut pixels = img.pixels.clone();
    let mut layers = 0usize;

    let neighbors4 = |v: usize| {
        let (i, j) = (v / w, v % w);
        let mut out = [usize::MAX; 4];
        let mut k = 0;
        if i > 0 {
            out[k] = v - w;
            k += 1;
        }
        if i + 1 < h {
            out[k] = v + w;
            k += 1;
        }
        if j > 0 {
            out[k] = v - 1;
            k += 1;
        }
        if j + 1 < w {
            out[k] = v + 1;
            k += 1;
        }
        (out, k)
    };

    loop {
        let remaining = known.iter().filter(|&&k| !k).count();
        if remaining == 0 {
            break;
        }
        let mut in_set = vec![false; n];
        let mut frontier = Vec::new();
        for v in 0..n {
            if known[v] {
                continue;
            }
            let (nbrs, cnt) = neighbors4(v);
            if nbrs[..cnt].iter().any(|&u| known[u]) {
                frontier.push(v);
                in_set[v] = true;
            }
        }
        if frontier.is_empty() {
            return Err(NonlocalError::StalledFrontier { remaining });
        }
        for &v in &frontier {
            let (nbrs, cnt) = neighbors4(v);
            for &u in &nbrs[..cnt] {
                if known[u] {
                    in_set[u] = true;
                }
            }
        }

        // Connected components of the induced 4-neighbor subgraph.
        let mut comp = vec![usize::MAX; n];
        let mut ncomp = 0usize;
        for v in 0..n {
            if !in_set[v] || comp[v] != usize::MAX {
                continue;
            }
            let mut stack = vec![v];
            comp[v] = ncomp;
            while let Some(u) = stack.pop() {
                let (nbrs, cnt) = neighbors4(u);
                for &x in &nbrs[..cnt] {
                    if in_set[x] && comp[x] == usize::MAX {
                        comp[x] = ncomp;
                        stack.push(x);
                    }
                }
            }
            ncomp += 1;
        }

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
        for v in 0..n {
            if in_set[v] {
                members[comp[v]].push(v);
            }
        }

        for verts in &members {
            let mut local = vec![usize::MAX; n];
            for (i, &v) in verts.iter().enumerate() {
                local[v] = i;
            }
            let mut edges = Vec::new();
            for &v in verts {
                let (nbrs, cnt) = neighbors4(v);
                for &u in &nbrs[..cnt] {
                    if u > v && local[u] != usize::MAX {
                        edges.push((local[v], local[u], 1.0));
                    }
                }
            }
            let mut g = BoundaryData::new(m);
            for &v in verts {
                if known[v] {
                    g.insert(local[v], pixels[v * m..v * m + m].to_vec())?;
                }
            }
            let boundary: Vec<usize> =
                verts.iter().filter(|&&v| known[v]).map(|&v| local[v]).collect();
            let graph = Arc::new(WeightedGraph::build(
                &edges,
                &boundary,
                &GraphOptions::default(),
            )?);
            let f = solve(&graph, &g).map_err(NonlocalError::InnerSolve)?;
            for &v in verts {
                if !known[v] {
                    let val = f.value(local[v]);
                    for ch in 0..m {
                        pixels[v * m + ch] = val[ch].clamp(0.0, 1.0);
                    }
                }
            }
        }
        for &v in &frontier {
            known[v] = true;
        }
        layers += 1;
    }

    Ok(FillResult {
        image: RawImage::new(h, w, m, pixels),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct double-loop patch distance used as an oracle for the
    /// plane-based pipeline.
    fn naive_distance2(
        img: &MaskedImage,
        params: &PatchGraphParams,
        x: (usize, usize),
        y: (usize, usize),
    ) -> Option<f64> {
        let (h, w, m) = (img.height, img.width, img.channels);
        let r = params.r as isize;
        let mut ssd = 0.0;
        let mut cnt = 0usize;
        for pi in -r..=r {
            for pj in -r..=r {
                let (ai, aj) = (
                    reflect101(x.0 as isize + pi, h),
                    reflect101(x.1 as isize + pj, w),
                );
                let (bi, bj) = (
                    reflect101(y.0 as isize + pi, h),
                    reflect101(y.1 as isize + pj, w),
                );
                let both = img.known[ai * w + aj] && img.known[bi * w + bj];
                if params.variant == MaskVariant::HoleMask && !both {
                    continue;
                }
                cnt += 1;
                for ch in 0..m {
                    let d = img.pixels[(ai * w + aj) * m + ch]
                        - img.pixels[(bi * w + bj) * m + ch];
                    ssd += d * d;
                }
            }
        }
        match params.variant {
            MaskVariant::RandomMask => Some(
                ssd + locality(
                    params.c,
                    y.0 as isize - x.0 as isize,
                    y.1 as isize - x.1 as isize,
                    h,
                    w,
                ),
            ),
            MaskVariant::HoleMask => {
                let area = ((2 * params.r + 1) * (2 * params.r + 1)) as f64;
                if (cnt as f64) >= params.min_overlap * area && cnt > 0 {
                    Some(ssd * area / cnt as f64)
                } else {
                    None
                }
            }
        }
    }

    fn test_image(h: usize, w: usize, m: usize, holes: &[(usize, usize)]) -> MaskedImage {
        let mut data = Vec::with_capacity(h * w * m);
        for i in 0..h {
            for j in 0..w {
                for ch in 0..m {
                    let v = ((i * 7 + j * 3 + ch * 5) % 11) as f64 / 10.0;
                    data.push(v);
                }
            }
        }
        let mut known = vec![true; h * w];
        for &(i, j) in holes {
            known[i * w + j] = false;
        }
        MaskedImage::new(&RawImage::new(h, w, m, data), known).unwrap()
    }

    #[test]
    fn reflect_is_mirror_without_repeat() {
        assert_eq!(reflect101(-1, 8), 1);
        assert_eq!(reflect101(-2, 8), 2);
        assert_eq!(reflect101(8, 8), 6);
        assert_eq!(reflect101(0, 8), 0);
        assert_eq!(reflect101(-1, 1), 0);
        // Patch corner of pixel (0, 0) at radius 1 reads pixel (1, 1).
        assert_eq!((reflect101(-1, 5), reflect101(-1, 5)), (1, 1));
    }

    #[test]
    fn locality_penalty_reference_value() {
        // A pure vertical offset of one full image height with c = 9.
        let h = 13;
        assert!((locality(9.0, h as isize, 0, h, 20) - 9.0).abs() < 1e-12);
        assert_eq!(locality(0.0, 3, 4, 10, 10), 0.0);
    }

    #[test]
    fn plane_distances_match_naive_oracle_random() {
        let img = test_image(6, 7, 3, &[(2, 3), (4, 1)]);
        let params = PatchGraphParams {
            r: 2,
            search_radius: 3,
            top_k: 200,
            c: 2.5,
            sigma_policy: SigmaPolicy::Fixed { sigma: 0.7 },
            add_local_grid: false,
            ..PatchGraphParams::default()
        };
        let inv2 = 1.0 / (0.7f64 * 0.7);
        let edges = assemble_edges(&img, &params, 1, false);
        assert!(!edges.is_empty());
        for &(u, v, wt) in &edges {
            let d2 = naive_distance2(&img, &params, img.pixel_of(u), img.pixel_of(v)).unwrap();
            let expect = (-d2 * (inv2 + inv2)).exp();
            assert!(
                (wt - expect).abs() <= 1e-12 * (1.0 + expect),
                "edge ({u},{v}): {wt} vs {expect}"
            );
        }
        // K larger than the window keeps every admissible pair.
        let window_pairs: usize = edges.len();
        let mut count = 0;
        for u in 0..42usize {
            for v in (u + 1)..42 {
                let (a, b) = (img.pixel_of(u), img.pixel_of(v));
                let within = (a.0 as isize - b.0 as isize).unsigned_abs() <= 3
                    && (a.1 as isize - b.1 as isize).unsigned_abs() <= 3;
                if within {
                    count += 1;
                }
            }
        }
        assert_eq!(window_pairs, count);
    }

    #[test]
    fn plane_distances_match_naive_oracle_hole() {
        let holes: Vec<(usize, usize)> =
            (2..5).flat_map(|i| (2..5).map(move |j| (i, j))).collect();
        let img = test_image(8, 8, 1, &holes);
        let params = PatchGraphParams {
            r: 1,
            search_radius: 3,
            top_k: 500,
            sigma_policy: SigmaPolicy::Fixed { sigma: 0.3 },
            variant: MaskVariant::HoleMask,
            min_overlap: 0.5,
            add_local_grid: false,
            ..PatchGraphParams::default()
        };
        let inv2 = 1.0 / (0.3f64 * 0.3);
        let edges = assemble_edges(&img, &params, 5, false);
        let mut present: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(u, v, wt) in &edges {
            present.insert((u, v), wt);
        }
        for u in 0..64usize {
            for v in (u + 1)..64 {
                let (a, b) = (img.pixel_of(u), img.pixel_of(v));
                if (a.0 as isize - b.0 as isize).unsigned_abs() > 3
                    || (a.1 as isize - b.1 as isize).unsigned_abs() > 3
                {
                    continue;
                }
                match naive_distance2(&img, &params, a, b) {
                    Some(d2) => {
                        let expect = (-d2 * (inv2 + inv2)).exp();
                        let got = present.get(&(u, v)).copied().unwrap_or(f64::NAN);
                        assert!(
                            (got - expect).abs() <= 1e-12 * (1.0 + expect),
                            "pair ({u},{v}): {got} vs {expect}"
                        );
                    }
                    None => assert!(
                        !present.contains_key(&(u, v)),
                        "pair ({u},{v}) should be excluded by min_overlap"
                    ),
                }
            }
        }
    }

    #[test]
    fn graph_is_deterministic_and_weights_valid() {
        let img = test_image(9, 9, 1, &[(4, 4), (4, 5), (5, 4)]);
        let params = PatchGraphParams {
            r: 1,
            search_radius: 4,
            top_k: 6,
            c: 1.0,
            ..PatchGraphParams::default()
        };
        let g1 = build_patch_graph(&img, &params, 42).unwrap();
        let g2 = build_patch_graph(&img, &params, 42).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        assert_eq!(g1.vertex_count(), 81);
        for &(u, v, w) in g1.edges() {
            assert!(u < v, "stored edges are canonical");
            assert!(w > 0.0 && w <= 1.0, "weight {w} outside (0,1]");
        }
    }

    #[test]
    fn local_grid_union_takes_the_larger_weight() {
        // Constant image, c = 0: every admissible pair has weight 1, which
        // beats the 0.5 grid weight; grid edges only fill in pairs the
        // top-K selection skipped.
        let raw = RawImage::new(5, 5, 1, vec![0.4; 25]);
        let mut known = vec![true; 25];
        known[12] = false;
        let img = MaskedImage::new(&raw, known).unwrap();
        let params = PatchGraphParams {
            r: 1,
            search_radius: 2,
            top_k: 3,
            c: 0.0,
            sigma_policy: SigmaPolicy::Fixed { sigma: 1.0 },
            add_local_grid: true,
            ..PatchGraphParams::default()
        };
        let g = build_patch_graph(&img, &params, 7).unwrap();
        let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(u, v, w) in g.edges() {
            weights.insert((u, v), w);
        }
        // Nonlocal weight for identical patches is exp(0) = 1.
        for (_, &w) in &weights {
            assert!(w == 1.0 || w == 0.5, "weights are nonlocal or grid: {w}");
        }
        // The grid edges incident to the unknown pixel exist either way.
        for v in [7usize, 11, 13, 17] {
            let key = (v.min(12), v.max(12));
            assert!(weights.contains_key(&key), "grid edge {key:?} missing");
        }
    }

    #[test]
    fn disconnected_nonlocal_graph_retries_with_grid() {
        // A deep hole under the hole-mask distance: center pixels have no
        // admissible partners at all, so without the grid the graph is
        // disconnected.
        let holes: Vec<(usize, usize)> =
            (1..8).flat_map(|i| (1..8).map(move |j| (i, j))).collect();
        let img = test_image(9, 9, 1, &holes);
        let params = PatchGraphParams {
            r: 1,
            search_radius: 2,
            top_k: 4,
            sigma_policy: SigmaPolicy::Fixed { sigma: 0.3 },
            variant: MaskVariant::HoleMask,
            min_overlap: 0.9,
            add_local_grid: false,
            ..PatchGraphParams::default()
        };
        let g = build_patch_graph(&img, &params, 3).unwrap();
        assert_eq!(g.vertex_count(), 81);
        let mut has_grid_weight = false;
        for &(_, _, w) in g.edges() {
            if w == params.local_grid_weight {
                has_grid_weight = true;
            }
        }
        assert!(has_grid_weight, "retry should have merged grid edges");
    }

    #[test]
    fn masked_image_validation() {
        let raw = RawImage::new(2, 2, 1, vec![0.0, 0.5, 1.0, 0.25]);
        assert!(MaskedImage::new(&raw, vec![true; 4]).is_err());
        assert!(MaskedImage::new(&raw, vec![false; 4]).is_err());
        assert!(MaskedImage::new(&raw, vec![true; 3]).is_err());
        let bad = RawImage::new(2, 2, 1, vec![0.0, 1.5, 1.0, 0.25]);
        assert!(MaskedImage::new(&bad, vec![true, true, false, true]).is_err());
        let img = MaskedImage::new(&raw, vec![true, true, false, true]).unwrap();
        assert_eq!(img.vertex(1, 0), 2);
        assert_eq!(img.pixel_of(3), (1, 1));
        assert_eq!(img.boundary_data().len(), 3);
    }

    #[test]
    fn params_serde_round_trip_and_defaults() {
        let text = r#"{
            "r": 7, "R": 45, "K": 45, "c": 0.0,
            "sigma_policy": {"fixed": {"sigma": 0.045}},
            "variant": "hole_mask"
        }"#;
        let p: PatchGraphParams = serde_json::from_str(text).unwrap();
        assert_eq!(p.search_radius, 45);
        assert_eq!(p.top_k, 45);
        assert_eq!(p.variant, MaskVariant::HoleMask);
        assert_eq!(p.sigma_policy, SigmaPolicy::Fixed { sigma: 0.045 });
        assert_eq!(p.min_overlap, 0.10);
        assert_eq!(p.local_grid_weight, 0.5);
        assert_eq!(p.local_grid_iters, 3);

        let d: PatchGraphParams = serde_json::from_str("{}").unwrap();
        assert_eq!(d.r, 5);
        assert_eq!(d.search_radius, 30);
        assert_eq!(d.top_k, 40);
        assert_eq!(d.c, 9.0);
        assert_eq!(d.sigma_policy, SigmaPolicy::Knn { k: 20 });

        let back = serde_json::to_string(&p).unwrap();
        let p2: PatchGraphParams = serde_json::from_str(&back).unwrap();
        assert_eq!(p2.search_radius, p.search_radius);
        assert_eq!(p2.sigma_policy, p.sigma_policy);
    }

    #[test]
    fn gaussian_init_is_deterministic_and_clamped() {
        let img = test_image(6, 6, 3, &[(1, 1), (2, 2), (3, 3), (4, 4)]);
        let a = init_random_gaussian(&img, 11).unwrap();
        let b = init_random_gaussian(&img, 11).unwrap();
        assert_eq!(a.data, b.data);
        for v in 0..36usize {
            if img.known[v] {
                for ch in 0..3 {
                    assert_eq!(a.data[v * 3 + ch], img.pixels[v * 3 + ch]);
                }
            }
        }
        assert!(a.data.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let c = init_random_gaussian(&img, 12).unwrap();
        assert_ne!(a.data, c.data, "different seeds draw different values");
    }

    #[test]
    fn gaussian_init_edge_cases() {
        // Too few known pixels for a 3-channel fit.
        let raw = RawImage::new(2, 2, 3, vec![0.5; 12]);
        let img = MaskedImage::new(&raw, vec![true, true, true, false]).unwrap();
        assert!(matches!(
            init_random_gaussian(&img, 1),
            Err(NonlocalError::TooFewKnownPixels { need: 4, got: 3 })
        ));

        // Exactly constant known pixels: unknowns filled with the constant.
        let raw = RawImage::new(2, 3, 1, vec![0.25; 6]);
        let img = MaskedImage::new(&raw, vec![true, true, true, true, false, false]).unwrap();
        let out = init_random_gaussian(&img, 9).unwrap();
        assert!(out.data.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn layered_fill_interpolates_a_path() {
        let raw = RawImage::new(1, 4, 1, vec![0.0, 0.9, 0.9, 1.0]);
        let img = MaskedImage::new(&raw, vec![true, false, false, true]).unwrap();
        let fill = init_layered_fill(&img).unwrap();
        assert_eq!(fill.layers, 1);
        assert!((fill.image.data[1] - 1.0 / 3.0).abs() < 1e-7);
        assert!((fill.image.data[2] - 2.0 / 3.0).abs() < 1e-7);
        assert_eq!(fill.image.data[0], 0.0);
        assert_eq!(fill.image.data[3], 1.0);
    }

    #[test]
    fn layered_fill_peels_a_square_hole() {
        // An 8x8 image with a centered 4x4 hole fills in two layers: the
        // outer ring first, then the inner 2x2 block.
        let holes: Vec<(usize, usize)> =
            (2..6).flat_map(|i| (2..6).map(move |j| (i, j))).collect();
        let img = test_image(8, 8, 1, &holes);
        let fill = init_layered_fill(&img).unwrap();
        assert_eq!(fill.layers, 2);
        assert!(fill.image.data.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for v in 0..64usize {
            if img.known[v] {
                assert_eq!(fill.image.data[v], img.pixels[v]);
            }
        }
    }
}
