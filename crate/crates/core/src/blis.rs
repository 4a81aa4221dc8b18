//! Cache-blocked BLAS-3 kernels in the GotoBLAS/BLIS style: three loops
//! (over `n` by `nc`, over `k` by `kc`, over `m` by `mc`) around packing
//! routines and a register-blocked macro-kernel.
//!
//! The asymmetric variants run the same loop nest but divide the outermost
//! row loop (Loop 3) between a fast lane and a slow lane, each with its own
//! `mc`. The slow lane runs on a scoped helper thread; the calling thread is
//! the fast lane.
//!
//! Every kernel subtracts the `k` products of an output element in ascending
//! order of `k`, one at a time, exactly as the naive references in
//! [`crate::dense`] do. Results are therefore bitwise independent of the
//! cache parameters and of how rows are split between lanes.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::{check_gemm_dims, check_syrk_dims, check_trsm_dims, Matrix};
use crate::error::{invalid, Result};

const MR: usize = 4;
const NR: usize = 4;

/// Loop strides: `mc` rows per Loop-3 block, `nc` columns per Loop-1
/// panel, `kc` depth per Loop-2 panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheParams {
    pub mc: usize,
    pub nc: usize,
    pub kc: usize,
}

impl CacheParams {
    /// Cortex-A15-class defaults.
    pub const FAST: CacheParams = CacheParams { mc: 156, nc: 4096, kc: 256 };
    /// Cortex-A7-class defaults.
    pub const SLOW: CacheParams = CacheParams { mc: 32, nc: 4096, kc: 256 };

    pub fn new(mc: usize, nc: usize, kc: usize) -> Result<Self> {
        if mc == 0 || nc == 0 || kc == 0 {
            return Err(invalid(format!("cache parameters must be >= 1, got ({mc},{nc},{kc})")));
        }
        Ok(CacheParams { mc, nc, kc })
    }
}

impl Default for CacheParams {
    fn default() -> Self {
        CacheParams::FAST
    }
}

/// Configuration of a fast+slow lane pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneConfig {
    pub fast: CacheParams,
    pub slow: CacheParams,
    /// Relative throughput of the fast lane. Must be positive.
    pub speed_fast: f64,
    /// Relative throughput of the slow lane. Zero disables the slow lane.
    pub speed_slow: f64,
}

impl LaneConfig {
    pub fn new(fast: CacheParams, slow: CacheParams, speed_fast: f64, speed_slow: f64) -> Result<Self> {
        let cfg = LaneConfig { fast, slow, speed_fast, speed_slow };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Only the fast lane does work.
    pub fn single_lane(fast: CacheParams) -> Self {
        LaneConfig { fast, slow: CacheParams::SLOW, speed_fast: 1.0, speed_slow: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_fast > 0.0 && self.speed_fast.is_finite()) {
            return Err(invalid(format!("fast lane speed must be positive, got {}", self.speed_fast)));
        }
        if !(self.speed_slow >= 0.0 && self.speed_slow.is_finite()) {
            return Err(invalid(format!("slow lane speed must be >= 0, got {}", self.speed_slow)));
        }
        CacheParams::new(self.fast.mc, self.fast.nc, self.fast.kc)?;
        CacheParams::new(self.slow.mc, self.slow.nc, self.slow.kc)?;
        Ok(())
    }
}

impl Default for LaneConfig {
    /// Big/LITTLE defaults; the 4.59 speed ratio is the measured GEMM
    /// task-time ratio of a Cortex-A7 versus a Cortex-A15 at block size 448.
    fn default() -> Self {
        LaneConfig { fast: CacheParams::FAST, slow: CacheParams::SLOW, speed_fast: 4.59, speed_slow: 1.0 }
    }
}

/// Row ranges assigned to each lane; together they partition `[0, m)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop3Split {
    pub fast_range: Range<usize>,
    pub slow_range: Range<usize>,
}

/// Divides `m` rows between the lanes in proportion to their speeds. The
/// fast lane gets the leading rows. When the smaller share is below half of
/// its lane's `mc` it is folded into the other lane.
pub fn split_loop3(m: usize, cfg: &LaneConfig) -> Loop3Split {
    let all_fast = Loop3Split { fast_range: 0..m, slow_range: m..m };
    if m == 0 || cfg.speed_slow <= 0.0 {
        return all_fast;
    }
    let share = m as f64 * cfg.speed_fast / (cfg.speed_fast + cfg.speed_slow);
    let f = (share.round() as usize).min(m);
    let s = m - f;
    // Minority lane; ties count the slow lane as the minority.
    if s <= f {
        if 2 * s < cfg.slow.mc {
            return all_fast;
        }
    } else if 2 * f < cfg.fast.mc {
        return Loop3Split { fast_range: 0..0, slow_range: 0..m };
    }
    Loop3Split { fast_range: 0..f, slow_range: f..m }
}

/// Packs rows `[p0, p0 + kb)` of columns `[c0, c0 + w)` of a column-major
/// source with leading dimension `ld` into `R`-wide micro-panels:
/// element `(p, c)` lands at `(c / R) * R * kb + p * R + c % R`. Partial
/// panels are zero padded.
#[allow(clippy::too_many_arguments)]
fn pack(src: &[f64], ld: usize, p0: usize, kb: usize, c0: usize, w: usize, r: usize, buf: &mut Vec<f64>) {
    let panels = w.div_ceil(r);
    buf.clear();
    buf.resize(panels * r * kb, 0.0);
    for c in 0..w {
        let col = &src[(c0 + c) * ld + p0..(c0 + c) * ld + p0 + kb];
        let base = (c / r) * r * kb + c % r;
        for (p, &v) in col.iter().enumerate() {
            buf[base + p * r] = v;
        }
    }
}

/// Inverse of `pack` for a `kb × w` panel.
fn unpack(buf: &[f64], kb: usize, w: usize, r: usize) -> Matrix {
    let mut out = Matrix::zeros(kb, w);
    for c in 0..w {
        let base = (c / r) * r * kb + c % r;
        for p in 0..kb {
            out[(p, c)] = buf[base + p * r];
        }
    }
    out
}

/// Packs the `kb × w` block of `src` at `(p0, c0)` in the B-panel layout.
pub fn pack_b_panel(src: &Matrix, p0: usize, kb: usize, c0: usize, w: usize) -> Vec<f64> {
    let mut buf = Vec::new();
    pack(src.as_slice(), src.rows(), p0, kb, c0, w, NR, &mut buf);
    buf
}

/// Unpacks a buffer produced by [`pack_b_panel`].
pub fn unpack_b_panel(buf: &[f64], kb: usize, w: usize) -> Matrix {
    unpack(buf, kb, w, NR)
}

/// Raw view of an output matrix shared by the two lanes.
#[derive(Clone, Copy)]
struct OutPtr {
    ptr: *mut f64,
    ld: usize,
}

// SAFETY: lanes holding copies of an `OutPtr` write disjoint rows
// (`split_loop3` ranges are disjoint) and the owning `&mut` borrow outlives
// the scoped threads.
unsafe impl Send for OutPtr {}
unsafe impl Sync for OutPtr {}

impl OutPtr {
    fn new(data: &mut [f64], ld: usize) -> Self {
        OutPtr { ptr: data.as_mut_ptr(), ld }
    }
}

/// `C[ic.., jc..] -= Ãᵀ·B̃` for one `mb × nb` block over depth `kb`. With
/// `upper` set only elements with global row <= column are written.
///
/// # Safety
/// The `mb × nb` block of `c` at `(ic, jc)` must be in bounds and not be
/// accessed by anyone else for the duration of the call.
#[allow(clippy::too_many_arguments)]
unsafe fn macro_kernel(
    apack: &[f64],
    bpack: &[f64],
    kb: usize,
    mb: usize,
    nb: usize,
    c: OutPtr,
    ic: usize,
    jc: usize,
    upper: bool,
) {
    for jt in (0..nb).step_by(NR) {
        let nr = NR.min(nb - jt);
        let bp = &bpack[(jt / NR) * NR * kb..][..NR * kb];
        for it in (0..mb).step_by(MR) {
            let mr = MR.min(mb - it);
            let (row0, col0) = (ic + it, jc + jt);
            if upper && row0 > col0 + nr - 1 {
                continue;
            }
            let ap = &apack[(it / MR) * MR * kb..][..MR * kb];
            let mut acc = [[0.0f64; MR]; NR];
            for (j, accj) in acc.iter_mut().enumerate().take(nr) {
                let col = c.ptr.add((col0 + j) * c.ld + row0);
                for (i, a) in accj.iter_mut().enumerate().take(mr) {
                    *a = *col.add(i);
                }
            }
            for p in 0..kb {
                let a = &ap[p * MR..p * MR + MR];
                let b = &bp[p * NR..p * NR + NR];
                for j in 0..NR {
                    for i in 0..MR {
                        acc[j][i] -= a[i] * b[j];
                    }
                }
            }
            for (j, accj) in acc.iter().enumerate().take(nr) {
                let col = c.ptr.add((col0 + j) * c.ld + row0);
                for (i, a) in accj.iter().enumerate().take(mr) {
                    if !upper || row0 + i <= col0 + j {
                        *col.add(i) = *a;
                    }
                }
            }
        }
    }
}

/// Loop-2 inputs shared read-only by both lanes.
#[derive(Clone, Copy)]
struct Panel<'a> {
    /// Column-major left operand; its column index is the output row index.
    a: &'a [f64],
    a_ld: usize,
    bpack: &'a [f64],
    pc: usize,
    kb: usize,
    jc: usize,
    nb: usize,
    upper: bool,
}

/// Loop 3 over `rows` in steps of `mc`: pack the A block, run the macro-kernel.
///
/// # Safety
/// No other thread may touch rows `rows` of columns `[jc, jc + nb)` of `c`.
unsafe fn loop3(panel: Panel<'_>, rows: Range<usize>, mc: usize, c: OutPtr, abuf: &mut Vec<f64>) {
    let last_col = panel.jc + panel.nb - 1;
    let mut ic = rows.start;
    while ic < rows.end {
        if panel.upper && ic > last_col {
            break;
        }
        let mb = mc.min(rows.end - ic);
        pack(panel.a, panel.a_ld, panel.pc, panel.kb, ic, mb, MR, abuf);
        macro_kernel(abuf, panel.bpack, panel.kb, mb, panel.nb, c, ic, panel.jc, panel.upper);
        ic += mb;
    }
}

enum Lanes<'a> {
    Single(usize),
    Dual(&'a LaneConfig),
}

/// `C := C - Aᵀ·B` (or its upper triangle) through Loops 1 and 2; Loop 3 is
/// run by one lane or split between two.
#[allow(clippy::too_many_arguments)]
fn blocked_update(
    a: &[f64],
    a_ld: usize,
    b: &[f64],
    b_ld: usize,
    c: &mut [f64],
    c_ld: usize,
    (m, n, k): (usize, usize, usize),
    nc: usize,
    kc: usize,
    lanes: Lanes<'_>,
    upper: bool,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let split = match lanes {
        Lanes::Single(mc) => (Loop3Split { fast_range: 0..m, slow_range: m..m }, mc, mc),
        Lanes::Dual(cfg) => (split_loop3(m, cfg), cfg.fast.mc, cfg.slow.mc),
    };
    let (split, mc_fast, mc_slow) = split;
    let out = OutPtr::new(c, c_ld);
    let (mut bbuf, mut abuf_fast, mut abuf_slow) = (Vec::new(), Vec::new(), Vec::new());
    let mut jc = 0;
    while jc < n {
        let nb = nc.min(n - jc);
        let mut pc = 0;
        while pc < k {
            let kb = kc.min(k - pc);
            pack(b, b_ld, pc, kb, jc, nb, NR, &mut bbuf);
            let panel = Panel { a, a_ld, bpack: &bbuf, pc, kb, jc, nb, upper };
            let (fr, sr) = (split.fast_range.clone(), split.slow_range.clone());
            // SAFETY: `fr` and `sr` are disjoint row ranges of `c`, which is
            // mutably borrowed for the whole call; the scope joins the slow
            // lane before the next panel is packed.
            unsafe {
                if sr.is_empty() {
                    loop3(panel, fr, mc_fast, out, &mut abuf_fast);
                } else if fr.is_empty() {
                    loop3(panel, sr, mc_slow, out, &mut abuf_slow);
                } else {
                    let slow_buf = &mut abuf_slow;
                    std::thread::scope(|s| {
                        s.spawn(move || loop3(panel, sr, mc_slow, out, slow_buf));
                        loop3(panel, fr, mc_fast, out, &mut abuf_fast);
                    });
                }
            }
            pc += kb;
        }
        jc += nb;
    }
}

/// Blocked `C := C - Aᵀ·B` with `A` `k × m`, `B` `k × n`, `C` `m × n`.
pub fn gemm_blocked(a: &Matrix, b: &Matrix, c: &mut Matrix, p: &CacheParams) -> Result<()> {
    check_gemm_dims(a, b, c)?;
    let dims = (c.rows(), c.cols(), a.rows());
    let (a_ld, b_ld, c_ld) = (a.rows(), b.rows(), c.rows());
    blocked_update(
        a.as_slice(),
        a_ld,
        b.as_slice(),
        b_ld,
        c.as_mut_slice(),
        c_ld,
        dims,
        p.nc,
        p.kc,
        Lanes::Single(p.mc),
        false,
    );
    Ok(())
}

/// Dual-lane [`gemm_blocked`]: Loops 1/2 use the fast lane's `nc`/`kc`,
/// Loop 3 is divided by [`split_loop3`].
pub fn gemm_asym(a: &Matrix, b: &Matrix, c: &mut Matrix, cfg: &LaneConfig) -> Result<()> {
    check_gemm_dims(a, b, c)?;
    cfg.validate()?;
    let dims = (c.rows(), c.cols(), a.rows());
    let (a_ld, b_ld, c_ld) = (a.rows(), b.rows(), c.rows());
    blocked_update(
        a.as_slice(),
        a_ld,
        b.as_slice(),
        b_ld,
        c.as_mut_slice(),
        c_ld,
        dims,
        cfg.fast.nc,
        cfg.fast.kc,
        Lanes::Dual(cfg),
        false,
    );
    Ok(())
}

/// Blocked `C := C - Aᵀ·A` on the upper triangle of `C`; `A` is `k × m`.
pub fn syrk_blocked(a: &Matrix, c: &mut Matrix, p: &CacheParams) -> Result<()> {
    check_syrk_dims(a, c)?;
    let dims = (c.rows(), c.cols(), a.rows());
    let (a_ld, c_ld) = (a.rows(), c.rows());
    blocked_update(
        a.as_slice(),
        a_ld,
        a.as_slice(),
        a_ld,
        c.as_mut_slice(),
        c_ld,
        dims,
        p.nc,
        p.kc,
        Lanes::Single(p.mc),
        true,
    );
    Ok(())
}

/// Dual-lane [`syrk_blocked`]; the row space of `C` is split between lanes.
pub fn syrk_asym(a: &Matrix, c: &mut Matrix, cfg: &LaneConfig) -> Result<()> {
    check_syrk_dims(a, c)?;
    cfg.validate()?;
    let dims = (c.rows(), c.cols(), a.rows());
    let (a_ld, c_ld) = (a.rows(), c.rows());
    blocked_update(
        a.as_slice(),
        a_ld,
        a.as_slice(),
        a_ld,
        c.as_mut_slice(),
        c_ld,
        dims,
        cfg.fast.nc,
        cfg.fast.kc,
        Lanes::Dual(cfg),
        true,
    );
    Ok(())
}

/// Forward substitution `Uᵀ·X = B` over whole columns held in `x` (`m` rows
/// each): right-hand sides in panels of `nc`, diagonal blocks of `kc`, and
/// the trailing update through the packed kernel with row blocks of `mc`.
fn trsm_columns(u: &Matrix, x: &mut [f64], p: &CacheParams) {
    let m = u.rows();
    if m == 0 || x.is_empty() {
        return;
    }
    let ncols = x.len() / m;
    let (mut bbuf, mut abuf) = (Vec::new(), Vec::new());
    let mut jc = 0;
    while jc < ncols {
        let nb = p.nc.min(ncols - jc);
        let panel = &mut x[jc * m..(jc + nb) * m];
        let mut pc = 0;
        while pc < m {
            let kb = p.kc.min(m - pc);
            for col in panel.chunks_exact_mut(m) {
                for r in pc..pc + kb {
                    let mut v = col[r];
                    for q in pc..r {
                        v -= u[(q, r)] * col[q];
                    }
                    col[r] = v / u[(r, r)];
                }
            }
            if pc + kb < m {
                pack(panel, m, pc, kb, 0, nb, NR, &mut bbuf);
                let blk = Panel { a: u.as_slice(), a_ld: m, bpack: &bbuf, pc, kb, jc: 0, nb, upper: false };
                let out = OutPtr::new(panel, m);
                // SAFETY: single lane, `panel` is exclusively borrowed and the
                // packed copy of the solved rows is a separate buffer.
                unsafe { loop3(blk, pc + kb..m, p.mc, out, &mut abuf) };
            }
            pc += kb;
        }
        jc += nb;
    }
}

/// Blocked solve of `Uᵀ·X = B` in place, `U` upper triangular.
pub fn trsm_blocked(u: &Matrix, b: &mut Matrix, p: &CacheParams) -> Result<()> {
    check_trsm_dims(u, b)?;
    trsm_columns(u, b.as_mut_slice(), p);
    Ok(())
}

/// Dual-lane [`trsm_blocked`]: the right-hand-side columns are split
/// between the lanes with [`split_loop3`].
pub fn trsm_asym(u: &Matrix, b: &mut Matrix, cfg: &LaneConfig) -> Result<()> {
    check_trsm_dims(u, b)?;
    cfg.validate()?;
    let m = b.rows();
    let split = split_loop3(b.cols(), cfg);
    let (fast, slow) = b.as_mut_slice().split_at_mut(split.fast_range.end * m);
    if slow.is_empty() {
        trsm_columns(u, fast, &cfg.fast);
    } else if fast.is_empty() {
        trsm_columns(u, slow, &cfg.slow);
    } else {
        std::thread::scope(|s| {
            s.spawn(|| trsm_columns(u, slow, &cfg.slow));
            trsm_columns(u, fast, &cfg.fast);
        });
    }
    Ok(())
}

/// One row of the crossover table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub size: usize,
    pub flops: f64,
    pub seq_seconds: f64,
    pub asym_seconds: f64,
    pub seq_gflops: f64,
    pub asym_gflops: f64,
}

pub const CROSSOVER_CSV_HEADER: &str = "size,flops,seq_seconds,asym_seconds,seq_gflops,asym_gflops";

impl CrossoverRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.9},{:.9},{:.6},{:.6}",
            self.size, self.flops, self.seq_seconds, self.asym_seconds, self.seq_gflops, self.asym_gflops
        )
    }
}

/// Times single-lane [`gemm_blocked`] (fast parameters) against
/// [`gemm_asym`] on square problems of each size. Best of three runs.
pub fn kernel_crossover_probe(sizes: &[usize], cfg: &LaneConfig) -> Result<Vec<CrossoverRow>> {
    if sizes.is_empty() {
        return Err(invalid("crossover probe needs at least one size"));
    }
    cfg.validate()?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 {
            return Err(invalid("crossover sizes must be >= 1"));
        }
        let a = crate::dense::make_spd(size, 1)?;
        let b = crate::dense::make_spd(size, 2)?;
        let time = |f: &dyn Fn(&mut Matrix)| {
            (0..3)
                .map(|_| {
                    let mut c = Matrix::zeros(size, size);
                    let t = Instant::now();
                    f(&mut c);
                    t.elapsed().as_secs_f64().max(1e-9)
                })
                .fold(f64::INFINITY, f64::min)
        };
        let seq_seconds = time(&|c| gemm_blocked(&a, &b, c, &cfg.fast).unwrap());
        let asym_seconds = time(&|c| gemm_asym(&a, &b, c, cfg).unwrap());
        let flops = 2.0 * (size as f64).powi(3);
        rows.push(CrossoverRow {
            size,
            flops,
            seq_seconds,
            asym_seconds,
            seq_gflops: flops / seq_seconds / 1e9,
            asym_gflops: flops / asym_seconds / 1e9,
        });
    }
    Ok(rows)
}
