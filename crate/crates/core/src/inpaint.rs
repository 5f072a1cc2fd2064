//! Edge inpainting backends.
//!
//! [`GeodesicCompleter`] bridges gaps in the current edge map with
//! least-cost paths over over-detected Canny pixels inside the mask.
//! [`ExternalInpainter`] hands the patch to another program through PGM
//! files, for learned models.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canny::sobel_gradients;
use crate::imagecore::morph::NEIGHBORS_8;
use crate::imagecore::{
    connected_components, dilate_square, ensure_same_shape, save_binary, save_image, BinaryEdgeMap,
    BitDepth, EdgeMap, GrayImage, Grid,
};

/// Environment variable naming the directory for per-invocation temp dirs.
pub const TMPDIR_ENV: &str = "CRISPEDGE_TMPDIR";

/// Keeps zero-gradient pixels traversable.
pub const COST_EPS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum InpaintError {
    #[error("patch shapes differ")]
    ShapeMismatch,
    #[error("could not start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("external command exited with {status}: {stderr}")]
    ExternalFailure { status: String, stderr: String },
    #[error("external command timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed output: {0}")]
    MalformedOutput(String),
    #[error("temp file i/o: {0}")]
    Io(String),
}

/// One patch handed to a backend. All four maps share a shape.
#[derive(Debug, Clone)]
pub struct InpaintRequest {
    pub edge: EdgeMap,
    pub gray: GrayImage,
    pub mask: BinaryEdgeMap,
    /// Guidance: the over-detected Canny map of the patch.
    pub canny: BinaryEdgeMap,
}

impl InpaintRequest {
    pub fn validate(&self) -> Result<(), InpaintError> {
        let ok = ensure_same_shape(&self.edge, &self.gray).is_ok()
            && ensure_same_shape(&self.edge, &self.mask).is_ok()
            && ensure_same_shape(&self.edge, &self.canny).is_ok();
        if ok {
            Ok(())
        } else {
            Err(InpaintError::ShapeMismatch)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inpainted {
    pub edges: EdgeMap,
    /// Gap endpoints for which no target was reachable.
    pub unreachable_endpoints: usize,
}

pub trait InpaintBackend: Send + Sync {
    fn name(&self) -> &str;
    fn inpaint(&self, req: &InpaintRequest) -> Result<Inpainted, InpaintError>;
}

/// How a completion path was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// From the tips of one edge component to the nearest pixel of
    /// another component.
    Bridge,
    /// From a single tip to another edge pixel, typically a distant tip
    /// of its own component.
    Closure,
}

/// A path written by the completer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionPath {
    pub kind: PathKind,
    /// Linear index of the edge pixel the path leaves from.
    pub source: usize,
    /// Linear index of the pixel reached, `None` when nothing was reachable.
    pub target: Option<usize>,
    /// Sum of `1 / (eps + grad)` over every pixel entered after the source.
    pub cost: f64,
    /// New pixels, source side first; excludes source and target.
    pub pixels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub edges: EdgeMap,
    pub paths: Vec<CompletionPath>,
}

impl Completion {
    pub fn unreachable(&self) -> usize {
        self.paths.iter().filter(|p| p.target.is_none()).count()
    }
}

/// Union-find over component labels.
struct Labels {
    parent: Vec<u32>,
}

impl Labels {
    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let p = self.parent[a as usize];
            self.parent[a as usize] = self.parent[p as usize];
            a = p;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Reusable Dijkstra buffers; only touched entries are reset.
struct Workspace {
    dist: Vec<f64>,
    prev: Vec<usize>,
    touched: Vec<usize>,
}

impl Workspace {
    fn reset(&mut self) {
        for &t in &self.touched {
            self.dist[t] = f64::INFINITY;
            self.prev[t] = usize::MAX;
        }
        self.touched.clear();
    }

    fn relax(&mut self, heap: &mut BinaryHeap<Reverse<(Cost, usize)>>, from: usize, v: usize, c: f64) {
        if c < self.dist[v] {
            if self.dist[v].is_infinite() {
                self.touched.push(v);
            }
            self.dist[v] = c;
            self.prev[v] = from;
            heap.push(Reverse((Cost(c), v)));
        }
    }
}

/// Geodesic gap completion. See [`geodesic_complete_detailed`].
pub fn geodesic_complete(req: &InpaintRequest, grad: &Grid<f64>) -> Result<EdgeMap, InpaintError> {
    Ok(geodesic_complete_detailed(req, grad)?.edges)
}

/// Bridges gaps in `req.edge` along `req.canny`.
///
/// Paths run over Canny pixels that are not yet edge pixels, inside the
/// mask plus a one-pixel halo, paying `1 / (eps + grad)` to enter a pixel.
/// Two passes:
///
/// 1. Bridge: each edge component, in label order, searches from all its
///    tips inside the region at once to the nearest edge pixel of a
///    different component. A tip is an edge pixel whose edge neighbours
///    all fit in one 2x2 window with it, which also catches the ends of
///    two-pixel-thick runs that have no single-neighbour pixel.
/// 2. Closure: each tip in the region, in row-major order, searches for an
///    edge pixel of another component, or a tip of its own component more
///    than two pixels away (Chebyshev). These searches skip pixels touching
///    their own component, except within two pixels of the source or of
///    such a target tip, so a loop can close without tracing a run's
///    parallel Canny line back to its far end.
///
/// A target is only entered from a newly traversed pixel, so every path
/// adds at least one pixel, written as 1.0. Heap ties go to the smaller
/// linear index. Searches that reach nothing are recorded with no target.
pub fn geodesic_complete_detailed(
    req: &InpaintRequest,
    grad: &Grid<f64>,
) -> Result<Completion, InpaintError> {
    req.validate()?;
    if ensure_same_shape(&req.edge, grad).is_err() {
        return Err(InpaintError::ShapeMismatch);
    }
    let (w, h) = req.edge.shape();
    let n = w * h;
    let mut edges = req.edge.clone();
    let mut on: Vec<bool> = edges.data().iter().map(|&v| v > 0.0).collect();
    let comps = connected_components(&edges.support());
    let mut label: Vec<u32> = comps.labels.data().to_vec();
    let mut uf = Labels {
        parent: (0..=comps.count as u32).collect(),
    };
    let region = dilate_square(&req.mask, 1);
    let cost: Vec<f64> = grad.data().iter().map(|g| 1.0 / (COST_EPS + g.max(0.0))).collect();
    let canny = req.canny.data();
    let region = region.data();

    let neighbors = |i: usize| {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        NEIGHBORS_8.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
                .then(|| ny as usize * w + nx as usize)
        })
    };
    // Every edge neighbour fits in one 2x2 window with `i`: the end of a
    // run up to two pixels thick.
    let is_tip = |on: &[bool], i: usize| {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        let (mut sx, mut sy) = ([false; 2], [false; 2]);
        for j in neighbors(i).filter(|&j| on[j]) {
            let (dx, dy) = ((j % w) as isize - x, (j / w) as isize - y);
            if dx != 0 {
                sx[(dx > 0) as usize] = true;
            }
            if dy != 0 {
                sy[(dy > 0) as usize] = true;
            }
        }
        !(sx[0] && sx[1]) && !(sy[0] && sy[1])
    };
    let chebyshev = |a: usize, b: usize| {
        let dx = (a % w).abs_diff(b % w);
        let dy = (a / w).abs_diff(b / w);
        dx.max(dy)
    };

    let mut ws = Workspace {
        dist: vec![f64::INFINITY; n],
        prev: vec![usize::MAX; n],
        touched: Vec::new(),
    };
    let mut paths = Vec::new();

    // Writes the path ending at `t`, merging every component it touches.
    let commit = |ws: &Workspace,
                      on: &mut Vec<bool>,
                      label: &mut Vec<u32>,
                      uf: &mut Labels,
                      edges: &mut EdgeMap,
                      kind: PathKind,
                      t: usize|
     -> CompletionPath {
        let mut pixels = Vec::new();
        let mut cur = ws.prev[t];
        while !on[cur] {
            pixels.push(cur);
            cur = ws.prev[cur];
        }
        let source = cur;
        pixels.reverse();
        let own = uf.find(label[source]);
        for &p in &pixels {
            on[p] = true;
            label[p] = own;
            edges.data_mut()[p] = 1.0;
        }
        for &p in &pixels {
            for q in neighbors(p) {
                if on[q] {
                    uf.union(own, label[q]);
                }
            }
        }
        CompletionPath {
            kind,
            source,
            target: Some(t),
            cost: ws.dist[t],
            pixels,
        }
    };

    // Pass 1: component bridges.
    let mut tips: Vec<Vec<usize>> = vec![Vec::new(); comps.count + 1];
    for i in 0..n {
        if on[i] && region[i] && is_tip(&on, i) {
            tips[label[i] as usize].push(i);
        }
    }
    for l in 1..=comps.count as u32 {
        let sources = &tips[l as usize];
        if sources.is_empty() {
            continue;
        }
        let own = uf.find(l);
        ws.reset();
        let mut heap = BinaryHeap::new();
        for &s in sources {
            ws.dist[s] = 0.0;
            ws.touched.push(s);
            heap.push(Reverse((Cost(0.0), s)));
        }
        let mut found = None;
        while let Some(Reverse((Cost(c), u))) = heap.pop() {
            if c > ws.dist[u] {
                continue;
            }
            if on[u] && uf.find(label[u]) != own {
                found = Some(u);
                break;
            }
            for v in neighbors(u) {
                let enter = if on[v] {
                    !on[u] && uf.find(label[v]) != own
                } else {
                    canny[v] && region[v]
                };
                if enter {
                    ws.relax(&mut heap, u, v, c + cost[v]);
                }
            }
        }
        match found {
            Some(t) => {
                let path = commit(&ws, &mut on, &mut label, &mut uf, &mut edges, PathKind::Bridge, t);
                paths.push(path);
            }
            None => {
                let alone = (1..=comps.count as u32).all(|m| m == l || uf.find(m) != own);
                if alone {
                    paths.push(CompletionPath {
                        kind: PathKind::Bridge,
                        source: sources[0],
                        target: None,
                        cost: f64::INFINITY,
                        pixels: Vec::new(),
                    });
                }
            }
        }
    }

    // Pass 2: tip closures.
    let starts: Vec<usize> = (0..n).filter(|&i| on[i] && region[i] && is_tip(&on, i)).collect();
    // near_far[p] == stamp marks pixels within two of a far own-group tip.
    let mut near_far = vec![0usize; n];
    for (k, &s) in starts.iter().enumerate() {
        if !is_tip(&on, s) {
            continue;
        }
        let stamp = k + 1;
        let own = uf.find(label[s]);
        let far_tips: Vec<usize> = starts
            .iter()
            .copied()
            .filter(|&t| {
                t != s
                    && on[t]
                    && uf.find(label[t]) == own
                    && is_tip(&on, t)
                    && chebyshev(s, t) > 2
            })
            .collect();
        for &t in &far_tips {
            let (tx, ty) = ((t % w) as isize, (t / w) as isize);
            for dy in -2..=2isize {
                for dx in -2..=2isize {
                    let (x, y) = (tx + dx, ty + dy);
                    if x >= 0 && y >= 0 && x < w as isize && y < h as isize {
                        near_far[y as usize * w + x as usize] = stamp;
                    }
                }
            }
        }
        // Own-group edge pixels a closure path may not run alongside.
        let hugs = |uf: &mut Labels, on: &[bool], label: &[u32], p: usize| {
            neighbors(p).any(|q| {
                on[q]
                    && chebyshev(q, s) > 2
                    && near_far[q] != stamp
                    && uf.find(label[q]) == own
            })
        };
        ws.reset();
        ws.dist[s] = 0.0;
        ws.touched.push(s);
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((Cost(0.0), s)));
        let mut found = None;
        while let Some(Reverse((Cost(c), u))) = heap.pop() {
            if c > ws.dist[u] {
                continue;
            }
            if u != s && on[u] {
                found = Some(u);
                break;
            }
            for v in neighbors(u) {
                let enter = if on[v] {
                    !on[u]
                        && (uf.find(label[v]) != own
                            || (is_tip(&on, v) && chebyshev(s, v) > 2))
                } else {
                    canny[v] && region[v] && !hugs(&mut uf, &on, &label, v)
                };
                if enter {
                    ws.relax(&mut heap, u, v, c + cost[v]);
                }
            }
        }
        paths.push(match found {
            Some(t) => commit(&ws, &mut on, &mut label, &mut uf, &mut edges, PathKind::Closure, t),
            None => CompletionPath {
                kind: PathKind::Closure,
                source: s,
                target: None,
                cost: f64::INFINITY,
                pixels: Vec::new(),
            },
        });
    }
    Ok(Completion { edges, paths })
}

/// Total order wrapper for finite path costs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Built-in backend; uses the Sobel magnitude of the gray patch as the
/// edge-strength field.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeodesicCompleter;

impl InpaintBackend for GeodesicCompleter {
    fn name(&self) -> &str {
        "geodesic"
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<Inpainted, InpaintError> {
        req.validate()?;
        let grad = sobel_gradients(&req.gray).magnitude;
        let c = geodesic_complete_detailed(req, &grad)?;
        Ok(Inpainted {
            unreachable_endpoints: c.unreachable(),
            edges: c.edges,
        })
    }
}

/// Root for per-invocation temp directories.
pub fn temp_root() -> PathBuf {
    std::env::var_os(TMPDIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir)
}

/// Captured output of a finished external command.
#[derive(Debug, Clone)]
pub struct ExternalOutput {
    pub stdout: String,
    pub stderr: String,
}

/// Runs `program args...`, killing it after `timeout`.
pub fn run_with_timeout(
    program: &str,
    args: &[String],
    timeout: Duration,
) -> Result<ExternalOutput, InpaintError> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| InpaintError::Spawn {
            program: program.to_string(),
            source,
        })?;
    let drain = |pipe: Option<Box<dyn Read + Send>>| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            if let Some(mut p) = pipe {
                let _ = p.read_to_end(&mut buf);
            }
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let err = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(InpaintError::Timeout(timeout));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(InpaintError::Io(e.to_string())),
        }
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    log::debug!("{program} stdout: {stdout}");
    log::debug!("{program} stderr: {stderr}");
    if !status.success() {
        return Err(InpaintError::ExternalFailure {
            status: status.to_string(),
            stderr,
        });
    }
    Ok(ExternalOutput { stdout, stderr })
}

/// Reads an external program's output map and checks its shape.
pub(crate) fn read_output(path: &Path, shape: (usize, usize)) -> Result<EdgeMap, InpaintError> {
    let map = crate::imagecore::load_unit(path)
        .map_err(|e| InpaintError::MalformedOutput(e.to_string()))?;
    if map.shape() != shape {
        return Err(InpaintError::MalformedOutput(format!(
            "expected {}x{}, got {}x{}",
            shape.0,
            shape.1,
            map.width(),
            map.height()
        )));
    }
    Ok(map.clamp_unit())
}

/// Splits a command template on whitespace into program and leading args.
pub fn split_template(template: &str) -> Option<(String, Vec<String>)> {
    let mut parts = template.split_whitespace().map(str::to_string);
    let program = parts.next()?;
    Some((program, parts.collect()))
}

/// Invokes `program [args...] edge.pgm gray.pgm mask.pgm out.pgm`; all
/// inputs are 8-bit P5 files of identical size.
#[derive(Debug, Clone)]
pub struct ExternalInpainter {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalInpainter {
    pub fn from_template(template: &str, timeout: Duration) -> Option<Self> {
        let (program, args) = split_template(template)?;
        Some(ExternalInpainter {
            program,
            args,
            timeout,
        })
    }
}

pub fn external_inpaint(
    req: &InpaintRequest,
    program: &str,
    args: &[String],
    timeout: Duration,
) -> Result<EdgeMap, InpaintError> {
    req.validate()?;
    let io = |e: crate::error::Error| InpaintError::Io(e.to_string());
    let dir = tempfile::Builder::new()
        .prefix("crispedge-inpaint-")
        .tempdir_in(temp_root())
        .map_err(|e| InpaintError::Io(e.to_string()))?;
    let p = |name: &str| dir.path().join(name);
    save_image(&req.edge, p("edge.pgm"), BitDepth::Eight).map_err(io)?;
    save_image(&req.gray, p("gray.pgm"), BitDepth::Eight).map_err(io)?;
    save_binary(&req.mask, p("mask.pgm"), BitDepth::Eight).map_err(io)?;
    let mut argv = args.to_vec();
    for name in ["edge.pgm", "gray.pgm", "mask.pgm", "out.pgm"] {
        argv.push(p(name).to_string_lossy().into_owned());
    }
    run_with_timeout(program, &argv, timeout)?;
    read_output(&p("out.pgm"), req.edge.shape())
}

impl InpaintBackend for ExternalInpainter {
    fn name(&self) -> &str {
        &self.program
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<Inpainted, InpaintError> {
        Ok(Inpainted {
            edges: external_inpaint(req, &self.program, &self.args, self.timeout)?,
            unreachable_endpoints: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(w: usize, h: usize) -> InpaintRequest {
        InpaintRequest {
            edge: EdgeMap::new(w, h, 0.0),
            gray: GrayImage::new(w, h, 0.5),
            mask: BinaryEdgeMap::new(w, h, false),
            canny: BinaryEdgeMap::new(w, h, false),
        }
    }

    #[test]
    fn fills_gap_along_line() {
        let mut req = request(30, 9);
        for x in 2..28 {
            req.canny.set(x, 4, true);
            if !(10..20).contains(&x) {
                req.edge.set(x, 4, 1.0);
            }
        }
        for y in 2..7 {
            for x in 9..21 {
                req.mask.set(x, y, true);
            }
        }
        let grad = Grid::new(30, 9, 1.0);
        let out = geodesic_complete(&req, &grad).unwrap();
        let expect = req.canny.to_edge_map();
        assert_eq!(out, expect);
    }

    #[test]
    fn empty_mask_is_identity() {
        let mut req = request(12, 12);
        for x in 0..12 {
            req.canny.set(x, 5, true);
        }
        req.edge.set(2, 5, 0.7);
        req.edge.set(9, 5, 0.4);
        let grad = Grid::new(12, 12, 1.0);
        let c = geodesic_complete_detailed(&req, &grad).unwrap();
        assert_eq!(c.edges, req.edge);
        assert!(c.paths.is_empty());
    }

    #[test]
    fn prefers_cheaper_parallel_line() {
        // Line A (row 3) carries the gap; line B (row 6) has no gap but is
        // reachable through a bridge at the far end. A is cheaper.
        let mut req = request(24, 10);
        for x in 1..23 {
            req.canny.set(x, 3, true);
            req.canny.set(x, 6, true);
            req.edge.set(x, 6, 1.0);
            if !(8..14).contains(&x) {
                req.edge.set(x, 3, 1.0);
            }
        }
        for y in 2..8 {
            for x in 7..15 {
                req.mask.set(x, y, true);
            }
        }
        // Bridge from A down to B through weak-gradient pixels.
        req.canny.set(10, 4, true);
        req.canny.set(10, 5, true);
        let mut grad = Grid::new(24, 10, 1.0);
        for x in 0..24 {
            grad.set(x, 3, 5.0);
        }
        let c = geodesic_complete_detailed(&req, &grad).unwrap();
        let out = c.edges;
        for x in 8..14 {
            assert_eq!(out.get(x, 3), 1.0);
        }
        for x in 0..24 {
            for y in [4, 5] {
                assert_eq!(out.get(x, y), 0.0);
            }
        }
        assert_eq!(c.paths[0].pixels.len(), 6);
    }

    #[test]
    fn unreachable_endpoint_recorded() {
        let mut req = request(16, 5);
        req.edge.set(3, 2, 1.0);
        req.edge.set(4, 2, 1.0);
        req.edge.set(12, 2, 1.0);
        req.canny = req.edge.support();
        for x in 2..14 {
            req.mask.set(x, 2, true);
        }
        let c = geodesic_complete_detailed(&req, &Grid::new(16, 5, 1.0)).unwrap();
        assert_eq!(c.edges, req.edge);
        assert!(c.unreachable() >= 2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut req = request(5, 5);
        req.mask = BinaryEdgeMap::new(4, 5, false);
        assert!(matches!(
            GeodesicCompleter.inpaint(&req),
            Err(InpaintError::ShapeMismatch)
        ));
    }

    #[test]
    fn template_splitting() {
        assert_eq!(
            split_template("python3  tool.py --x 1"),
            Some(("python3".into(), vec!["tool.py".into(), "--x".into(), "1".into()]))
        );
        assert_eq!(split_template("   "), None);
    }
}
