//! The external memory: storage matrix, addressing mechanics,
//! temperature-recalibrated content lookup, and runtime extension.

use crate::error::{DncError, Result};
use crate::math;
use crate::tensor::Tensor;

/// Tolerance for the weighting-sum and range invariants.
pub const INVARIANT_TOL: f64 = 1e-6;

/// The mutable store of the machine: memory matrix plus usage, precedence,
/// temporal-link, and head-weighting state.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    /// N×C storage.
    pub mem: Tensor,
    /// Usage per cell, in [0,1].
    pub usage: Tensor,
    /// Precedence weighting, sums to ≤ 1.
    pub precedence: Tensor,
    /// N×N temporal link matrix, zero diagonal.
    pub link: Tensor,
    pub write_w: Tensor,
    pub read_ws: Vec<Tensor>,
    pub read_values: Vec<Tensor>,
}

impl MemoryState {
    pub fn zero(cells: usize, word: usize, read_heads: usize) -> Self {
        MemoryState {
            mem: Tensor::zeros(cells, word),
            usage: Tensor::zeros(cells, 1),
            precedence: Tensor::zeros(cells, 1),
            link: Tensor::zeros(cells, cells),
            write_w: Tensor::zeros(cells, 1),
            read_ws: (0..read_heads).map(|_| Tensor::zeros(cells, 1)).collect(),
            read_values: (0..read_heads).map(|_| Tensor::zeros(word, 1)).collect(),
        }
    }

    pub fn cells(&self) -> usize {
        self.mem.rows
    }

    pub fn word(&self) -> usize {
        self.mem.cols
    }

    /// Fraction of cells whose usage exceeds `cutoff` — the model's own
    /// allocation signal, used by the adaptive extension rule.
    pub fn allocated_fraction(&self, cutoff: f64) -> f64 {
        if self.usage.len() == 0 {
            return 0.0;
        }
        let hot = self.usage.iter().filter(|&&u| u > cutoff).count();
        hot as f64 / self.usage.len() as f64
    }

    /// Check every weighting-sum and range invariant, to `INVARIANT_TOL`.
    pub fn validate(&self) -> Result<()> {
        let n = self.cells();
        check_weighting("write weighting", &self.write_w, n)?;
        check_weighting("precedence", &self.precedence, n)?;
        for (i, w) in self.read_ws.iter().enumerate() {
            if check_weighting("read weighting", w, n).is_err() {
                return Err(DncError::rejected(
                    "memory invariants",
                    format!("read weighting {i} out of range"),
                ));
            }
        }
        for &u in self.usage.iter() {
            if !(-INVARIANT_TOL..=1.0 + INVARIANT_TOL).contains(&u) {
                return Err(DncError::rejected("memory invariants", format!("usage {u} outside [0,1]")));
            }
        }
        if self.link.rows != n || self.link.cols != n {
            return Err(DncError::shape("memory invariants", format!("{n}x{n} link"), format!("{:?}", self.link.shape())));
        }
        let mut col_sums = vec![0.0; n];
        for i in 0..n {
            if self.link.at(i, i) != 0.0 {
                return Err(DncError::rejected("memory invariants", "nonzero link diagonal"));
            }
            let mut row_sum = 0.0;
            for j in 0..n {
                let v = self.link.at(i, j);
                if !(-INVARIANT_TOL..=1.0 + INVARIANT_TOL).contains(&v) {
                    return Err(DncError::rejected("memory invariants", format!("link entry {v} outside [0,1]")));
                }
                row_sum += v;
                col_sums[j] += v;
            }
            if row_sum > 1.0 + INVARIANT_TOL {
                return Err(DncError::rejected("memory invariants", format!("link row {i} sums to {row_sum}")));
            }
        }
        for (j, s) in col_sums.iter().enumerate() {
            if *s > 1.0 + INVARIANT_TOL {
                return Err(DncError::rejected("memory invariants", format!("link column {j} sums to {s}")));
            }
        }
        Ok(())
    }
}

fn check_weighting(what: &'static str, w: &Tensor, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(DncError::shape(what, format!("length {n}"), format!("{}", w.len())));
    }
    let mut sum = 0.0;
    for &v in w.iter() {
        if !(-INVARIANT_TOL..=1.0 + INVARIANT_TOL).contains(&v) {
            return Err(DncError::rejected(what, format!("entry {v} outside [0,1]")));
        }
        sum += v;
    }
    if sum > 1.0 + INVARIANT_TOL {
        return Err(DncError::rejected(what, format!("sums to {sum} > 1")));
    }
    Ok(())
}

/// Adaptive memory-extension rule parameters (§ growth-on-pressure).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdaptiveMemoryConfig {
    /// Allocated-fraction threshold that triggers growth.
    pub alloc_threshold: f64,
    /// Cell-count multiplier per extension.
    pub growth_factor: usize,
    /// Temperature multiplier per extension.
    pub temp_factor: f64,
    /// Usage cutoff that counts a cell as allocated.
    pub usage_cell_cutoff: f64,
    /// Maximum number of extensions per episode.
    pub max_extensions: usize,
}

impl Default for AdaptiveMemoryConfig {
    fn default() -> Self {
        AdaptiveMemoryConfig {
            alloc_threshold: 0.65,
            growth_factor: 2,
            temp_factor: 0.85,
            usage_cell_cutoff: 0.5,
            max_extensions: 4,
        }
    }
}

impl AdaptiveMemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.alloc_threshold && self.alloc_threshold < 1.0) {
            return Err(DncError::Config(format!(
                "alloc_threshold must be in (0,1), got {}",
                self.alloc_threshold
            )));
        }
        if self.growth_factor < 2 {
            return Err(DncError::Config(format!(
                "growth_factor must be >= 2, got {}",
                self.growth_factor
            )));
        }
        if !(0.0 < self.temp_factor && self.temp_factor <= 1.0) {
            return Err(DncError::Config(format!(
                "temp_factor must be in (0,1], got {}",
                self.temp_factor
            )));
        }
        Ok(())
    }
}

/// How an episode manages memory size at inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendMode {
    /// Grow by `growth_factor` and multiply τ by `temp_factor` whenever the
    /// allocated fraction exceeds the threshold.
    Auto,
    /// Extend once by `factor` and run at `tau_fixed`.
    Fixed { factor: usize, tau_fixed: f64 },
}

/// Content lookup: cosine scores against each row, sharpened by the
/// strength β and recalibrated by the temperature τ before the softmax:
/// `c = softmax(ĉ · β / τ)`.
pub fn content_address(key: &Tensor, beta: f64, tau: f64, mem: &Tensor) -> Result<Tensor> {
    if !key.all_finite() || !beta.is_finite() {
        return Err(DncError::rejected("content_address", "non-finite key or strength"));
    }
    if !(tau > 0.0) {
        return Err(DncError::rejected("content_address", format!("temperature {tau} must be > 0")));
    }
    if key.len() != mem.cols {
        return Err(DncError::shape("content_address", format!("key length {}", mem.cols), format!("{}", key.len())));
    }
    let scores = math::content_scores(mem, key);
    Ok(math::softmax_scaled(&scores, beta / tau))
}

/// Read value `r = Mᵀ w`.
pub fn read(mem: &Tensor, w: &Tensor) -> Result<Tensor> {
    if w.len() != mem.rows {
        return Err(DncError::shape("read", format!("weighting length {}", mem.rows), format!("{}", w.len())));
    }
    Ok(math::matvec_t(mem, w))
}

/// Erase/add write: `M'[j] = M[j] ∘ (1 − w[j]·e) + w[j]·v`.
pub fn write(mem: &Tensor, w: &Tensor, erase: &Tensor, value: &Tensor) -> Result<Tensor> {
    if w.len() != mem.rows || erase.len() != mem.cols || value.len() != mem.cols {
        return Err(DncError::shape(
            "write",
            format!("w:{} e:{} v:{}", mem.rows, mem.cols, mem.cols),
            format!("w:{} e:{} v:{}", w.len(), erase.len(), value.len()),
        ));
    }
    if erase.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
        return Err(DncError::rejected("write", "erase entries outside [0,1]"));
    }
    Ok(math::write_memory(mem, w, erase, value))
}

/// Usage update plus sorted-free-list allocation weighting.
pub fn dynamic_allocation(
    usage: &Tensor,
    free_gates: &[f64],
    prev_read_ws: &[Tensor],
    prev_write_w: &Tensor,
) -> Result<(Tensor, Tensor)> {
    if free_gates.len() != prev_read_ws.len() {
        return Err(DncError::shape(
            "dynamic_allocation",
            format!("{} free gates", prev_read_ws.len()),
            format!("{}", free_gates.len()),
        ));
    }
    let refs: Vec<&Tensor> = prev_read_ws.iter().collect();
    let free = Tensor::from_vec(free_gates.to_vec());
    let psi = math::retention_sized(&refs, &free, usage.len());
    let u = math::usage_update(usage, prev_write_w, &psi);
    let order = math::free_list(&u);
    let a = math::allocation_from_order(&u, &order);
    Ok((u, a))
}

/// Temporal link and precedence update, plus the forward/backward read
/// distributions for each previous read weighting.
pub fn temporal_addressing(
    link: &Tensor,
    precedence: &Tensor,
    write_w: &Tensor,
    prev_read_ws: &[Tensor],
) -> Result<(Tensor, Tensor, Vec<Tensor>, Vec<Tensor>)> {
    let n = link.rows;
    if link.cols != n || precedence.len() != n || write_w.len() != n {
        return Err(DncError::shape(
            "temporal_addressing",
            format!("square link and length-{n} vectors"),
            format!("link {:?}, pr {}, w {}", link.shape(), precedence.len(), write_w.len()),
        ));
    }
    let new_link = math::link_update(link, precedence, write_w);
    let new_pr = math::precedence_update(precedence, write_w);
    let fwd = prev_read_ws.iter().map(|w| math::matvec(&new_link, w)).collect();
    let bwd = prev_read_ws.iter().map(|w| math::matvec_t(&new_link, w)).collect();
    Ok((new_link, new_pr, fwd, bwd))
}

/// Three-mode read mixture: `w = π₁·bwd + π₂·content + π₃·fwd`.
pub fn read_weighting(modes: &Tensor, content: &Tensor, fwd: &Tensor, bwd: &Tensor) -> Result<Tensor> {
    if modes.len() != 3 {
        return Err(DncError::shape("read_weighting", "3 modes", format!("{}", modes.len())));
    }
    let sum: f64 = modes.iter().sum();
    if (sum - 1.0).abs() > INVARIANT_TOL {
        return Err(DncError::rejected("read_weighting", format!("modes sum to {sum}, want 1")));
    }
    let mut out = math::scale(bwd, modes.data[0]);
    let c = math::scale(content, modes.data[1]);
    let f = math::scale(fwd, modes.data[2]);
    out = math::add(&out, &c);
    out = math::add(&out, &f);
    Ok(out)
}

/// Outcome of an extension check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendOutcome {
    pub extended: bool,
    pub tau: f64,
}

/// Grow the memory at inference time.
///
/// Auto mode: when the allocated fraction (cells with usage above the
/// cutoff) exceeds the threshold, multiply the cell count by the growth
/// factor and the temperature by `temp_factor`. Fixed mode extends once by
/// `factor` and pins τ. New cells are zero rows with zero usage, zero link
/// rows/columns, and zero weighting mass, so reads over the original cells
/// are unchanged.
pub fn adaptive_extend(
    state: &mut MemoryState,
    tau: f64,
    cfg: &AdaptiveMemoryConfig,
    mode: ExtendMode,
    extensions_done: &mut usize,
) -> Result<ExtendOutcome> {
    cfg.validate()?;
    match mode {
        ExtendMode::Auto => {
            if state.allocated_fraction(cfg.usage_cell_cutoff) <= cfg.alloc_threshold {
                return Ok(ExtendOutcome { extended: false, tau });
            }
            if *extensions_done >= cfg.max_extensions {
                return Err(DncError::Capacity(format!(
                    "adaptive extension limit ({}) reached at {} cells",
                    cfg.max_extensions,
                    state.cells()
                )));
            }
            grow(state, cfg.growth_factor);
            *extensions_done += 1;
            Ok(ExtendOutcome { extended: true, tau: tau * cfg.temp_factor })
        }
        ExtendMode::Fixed { factor, tau_fixed } => {
            if factor < 2 {
                return Err(DncError::Config(format!("fixed extension factor must be >= 2, got {factor}")));
            }
            grow(state, factor);
            *extensions_done += 1;
            Ok(ExtendOutcome { extended: true, tau: tau_fixed })
        }
    }
}

fn grow(state: &mut MemoryState, factor: usize) {
    let n = state.cells();
    let word = state.word();
    let n2 = n * factor;

    let mut mem = Tensor::zeros(n2, word);
    mem.data[..n * word].copy_from_slice(&state.mem.data);
    state.mem = mem;

    let extend_vec = |v: &Tensor| {
        let mut out = Tensor::zeros(n2, 1);
        out.data[..n].copy_from_slice(&v.data);
        out
    };
    state.usage = extend_vec(&state.usage);
    state.precedence = extend_vec(&state.precedence);
    state.write_w = extend_vec(&state.write_w);
    state.read_ws = state.read_ws.iter().map(extend_vec).collect();

    let mut link = Tensor::zeros(n2, n2);
    for i in 0..n {
        for j in 0..n {
            *link.at_mut(i, j) = state.link.at(i, j);
        }
    }
    state.link = link;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_address_uniform_on_identical_rows() {
        let key = Tensor::from_vec(vec![0.4, -0.3, 0.8]);
        let mem = Tensor::from_rows(&[key.data.clone(), key.data.clone(), key.data.clone(), key.data.clone()]);
        let c = content_address(&key, 7.0, 0.3, &mem).unwrap();
        for &v in c.iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn content_address_tau_one_is_plain_softmax_path() {
        let key = Tensor::from_vec(vec![1.0, 2.0, -0.5]);
        let mem = Tensor::from_rows(&[
            vec![0.2, 0.1, 0.0],
            vec![-1.0, 0.5, 0.5],
            vec![1.0, 2.0, -0.5],
        ]);
        let beta = 3.0;
        let via_tau = content_address(&key, beta, 1.0, &mem).unwrap();
        let baseline = math::softmax_scaled(&math::content_scores(&mem, &key), beta);
        assert_eq!(via_tau, baseline); // bitwise
    }

    #[test]
    fn content_address_matches_scalar_oracle() {
        // N=2 rows chosen so cosine scores are exactly (1, 0);
        // softmax((2/0.65, 0)) evaluated with independent scalar math.
        let key = Tensor::from_vec(vec![1.0, 0.0]);
        let mem = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 5.0]]);
        let c = content_address(&key, 2.0, 0.65, &mem).unwrap();
        let z0 = (2.0f64 / 0.65).exp();
        let expect0 = z0 / (z0 + 1.0);
        assert!((c.data[0] - expect0).abs() < 1e-9);
        assert!((c.data[0] - 0.956).abs() < 5e-4);
        assert!((c.data[1] - 0.044).abs() < 5e-4);
        let sum: f64 = c.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn content_address_rejects_bad_inputs() {
        let mem = Tensor::zeros(3, 2);
        assert!(content_address(&Tensor::from_vec(vec![f64::NAN, 0.0]), 1.0, 1.0, &mem).is_err());
        assert!(content_address(&Tensor::from_vec(vec![1.0, 0.0]), f64::INFINITY, 1.0, &mem).is_err());
        assert!(content_address(&Tensor::from_vec(vec![1.0, 0.0]), 1.0, 0.0, &mem).is_err());
        assert!(content_address(&Tensor::from_vec(vec![1.0, 0.0, 3.0]), 1.0, 1.0, &mem).is_err());
    }

    #[test]
    fn content_address_key_scale_invariance() {
        let mem = Tensor::from_rows(&[vec![0.3, 1.0, -0.2], vec![0.9, -0.4, 0.1], vec![0.0, 0.2, 0.7]]);
        let key = Tensor::from_vec(vec![0.5, -1.0, 2.0]);
        let scaled = Tensor::from_vec(key.data.iter().map(|v| v * 37.5).collect());
        let a = content_address(&key, 2.5, 0.8, &mem).unwrap();
        let b = content_address(&scaled, 2.5, 0.8, &mem).unwrap();
        // Tolerance reflects the ε guard in the norm denominator.
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn lower_temperature_sharpens() {
        let mem = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]);
        let key = Tensor::from_vec(vec![1.0, 0.2]);
        let entropy = |w: &Tensor| -> f64 {
            w.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
        };
        let warm = content_address(&key, 2.0, 1.0, &mem).unwrap();
        let cool = content_address(&key, 2.0, 0.65, &mem).unwrap();
        assert!(entropy(&cool) < entropy(&warm));
    }

    #[test]
    fn read_one_hot_and_mean() {
        let mem = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let one_hot = Tensor::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(read(&mem, &one_hot).unwrap().data, vec![3.0, 4.0]);
        let half = Tensor::from_vec(vec![0.5, 0.0, 0.5]);
        assert_eq!(read(&mem, &half).unwrap().data, vec![3.0, 4.0]);
        let w = Tensor::from_vec(vec![0.2, 0.3, 0.5]);
        let mem2 = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
        let r = read(&mem2, &w).unwrap();
        assert!((r.data[0] - 1.2).abs() < 1e-15);
        assert!((r.data[1] - 1.3).abs() < 1e-15);
        assert!(read(&mem, &w.clone()).is_ok());
        assert!(read(&mem, &Tensor::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn write_zero_full_and_partial() {
        let mem = Tensor::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0]]);
        let zero_w = Tensor::from_vec(vec![0.0, 0.0]);
        let e = Tensor::from_vec(vec![1.0, 1.0]);
        let v = Tensor::from_vec(vec![0.0, 4.0]);
        assert_eq!(write(&mem, &zero_w, &e, &v).unwrap(), mem);

        let full = Tensor::from_vec(vec![1.0, 0.0]);
        let m2 = write(&mem, &full, &e, &v).unwrap();
        assert_eq!(m2.row(0), &[0.0, 4.0]);
        assert_eq!(m2.row(1), &[1.0, 1.0]);

        let half = Tensor::from_vec(vec![0.5, 0.0]);
        let m3 = write(&mem, &half, &e, &v).unwrap();
        assert_eq!(m3.row(0), &[1.0, 2.0]);

        let bad_e = Tensor::from_vec(vec![1.5, 0.0]);
        assert!(write(&mem, &half, &bad_e, &v).is_err());
    }

    #[test]
    fn allocation_examples() {
        // Usage passed straight through: no gates, no prior writes.
        let ws: Vec<Tensor> = vec![];
        let w0 = Tensor::from_vec(vec![0.0, 0.0, 0.0]);

        let (u, a) = dynamic_allocation(&Tensor::from_vec(vec![1.0, 1.0, 1.0]), &[], &ws, &w0).unwrap();
        assert_eq!(u.data, vec![1.0, 1.0, 1.0]);
        assert_eq!(a.data, vec![0.0, 0.0, 0.0]);

        let (_, a) = dynamic_allocation(&Tensor::from_vec(vec![0.0, 0.0, 0.0]), &[], &ws, &w0).unwrap();
        assert_eq!(a.data, vec![1.0, 0.0, 0.0]);

        let (_, a) = dynamic_allocation(&Tensor::from_vec(vec![0.5, 0.0, 1.0]), &[], &ws, &w0).unwrap();
        assert!((a.data[0] - 0.0).abs() < 1e-15);
        assert!((a.data[1] - 1.0).abs() < 1e-15);
        assert!((a.data[2] - 0.0).abs() < 1e-15);
    }

    /// Brute-force allocation: for each cell, the product over strictly
    /// freer cells (ties by index), written without the sort.
    fn brute_allocation(u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut a = vec![0.0; n];
        for j in 0..n {
            let mut prod = 1.0;
            for l in 0..n {
                if u[l] < u[j] || (u[l] == u[j] && l < j) {
                    prod *= u[l];
                }
            }
            a[j] = (1.0 - u[j]) * prod;
        }
        a
    }

    #[test]
    fn allocation_matches_bruteforce_exhaustively() {
        let mut rng = crate::rng::RootSeed(11).stream(crate::rng::Stream::Init);
        for n in 1..=8 {
            for _ in 0..200 {
                let u: Vec<f64> = (0..n).map(|_| crate::rng::uniform(&mut rng)).collect();
                let t = Tensor::from_vec(u.clone());
                let order = math::free_list(&t);
                let a = math::allocation_from_order(&t, &order);
                let b = brute_allocation(&u);
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn temporal_addressing_examples() {
        let n = 3;
        // Nothing written yet: link stays zero.
        let zero = Tensor::zeros(n, 1);
        let (l1, pr1, _, _) =
            temporal_addressing(&Tensor::zeros(n, n), &zero, &Tensor::from_vec(vec![0.0, 1.0, 0.0]), &[]).unwrap();
        assert!(l1.iter().all(|&v| v == 0.0));
        assert_eq!(pr1.data, vec![0.0, 1.0, 0.0]);

        // One-hot write at cell 0 then at cell 1: link[1][0] = 1, and a read
        // at cell 0 flows forward to cell 1.
        let w2 = Tensor::from_vec(vec![0.0, 1.0, 0.0]);
        let read_at_0 = Tensor::from_vec(vec![1.0, 0.0, 0.0]);
        let (l2, _, fwd, bwd) = temporal_addressing(
            &Tensor::zeros(n, n),
            &Tensor::from_vec(vec![1.0, 0.0, 0.0]),
            &w2,
            std::slice::from_ref(&read_at_0),
        )
        .unwrap();
        assert_eq!(l2.at(1, 0), 1.0);
        assert_eq!(fwd[0].data, vec![0.0, 1.0, 0.0]);
        // Backward from cell 1 returns to cell 0.
        let (_, _, _, bwd2) = temporal_addressing(
            &Tensor::zeros(n, n),
            &Tensor::from_vec(vec![1.0, 0.0, 0.0]),
            &w2,
            &[Tensor::from_vec(vec![0.0, 1.0, 0.0])],
        )
        .unwrap();
        assert_eq!(bwd2[0].data, vec![1.0, 0.0, 0.0]);
        let _ = bwd;
    }

    #[test]
    fn zero_link_gives_zero_directional_reads() {
        let n = 4;
        let w = Tensor::from_vec(vec![0.25; n]);
        let (link, _, fwd, bwd) =
            temporal_addressing(&Tensor::zeros(n, n), &Tensor::zeros(n, 1), &Tensor::zeros(n, 1), &[w]).unwrap();
        assert!(link.iter().all(|&v| v == 0.0));
        assert!(fwd[0].iter().all(|&v| v == 0.0));
        assert!(bwd[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn read_weighting_modes() {
        let c = Tensor::from_vec(vec![0.5, 0.3, 0.2]);
        let f = Tensor::from_vec(vec![0.1, 0.1, 0.1]);
        let b = Tensor::from_vec(vec![0.0, 0.9, 0.0]);

        let pure = read_weighting(&Tensor::from_vec(vec![0.0, 1.0, 0.0]), &c, &f, &b).unwrap();
        assert_eq!(pure.data, c.data);

        let zeroed = read_weighting(&Tensor::from_vec(vec![1.0, 0.0, 0.0]), &c, &f, &Tensor::zeros(3, 1)).unwrap();
        assert!(zeroed.iter().all(|&v| v == 0.0));

        let mix = read_weighting(&Tensor::from_vec(vec![0.5, 0.5, 0.0]), &c, &f, &b).unwrap();
        let sum: f64 = mix.iter().sum();
        let expect = 0.5 * b.iter().sum::<f64>() + 0.5 * c.iter().sum::<f64>();
        assert!((sum - expect).abs() < 1e-12);

        assert!(read_weighting(&Tensor::from_vec(vec![0.5, 0.2, 0.0]), &c, &f, &b).is_err());
    }

    #[test]
    fn adaptive_extension_rule() {
        let cfg = AdaptiveMemoryConfig::default();
        let mut st = MemoryState::zero(200, 8, 2);
        // 132/200 = 0.66 allocated.
        for j in 0..132 {
            st.usage.data[j] = 0.9;
        }
        let mut done = 0;
        let out = adaptive_extend(&mut st, 1.0, &cfg, ExtendMode::Auto, &mut done).unwrap();
        assert!(out.extended);
        assert_eq!(st.cells(), 400);
        assert!((out.tau - 0.85).abs() < 1e-15);
        assert_eq!(done, 1);

        // Below threshold: unchanged.
        let mut st2 = MemoryState::zero(200, 8, 2);
        for j in 0..20 {
            st2.usage.data[j] = 0.9;
        }
        let mut done2 = 0;
        let out2 = adaptive_extend(&mut st2, 1.0, &cfg, ExtendMode::Auto, &mut done2).unwrap();
        assert!(!out2.extended);
        assert_eq!(st2.cells(), 200);
        assert_eq!(out2.tau, 1.0);
    }

    #[test]
    fn fixed_extension_five_times() {
        let cfg = AdaptiveMemoryConfig::default();
        let mut st = MemoryState::zero(200, 8, 1);
        let mut done = 0;
        let out = adaptive_extend(&mut st, 1.0, &cfg, ExtendMode::Fixed { factor: 5, tau_fixed: 0.65 }, &mut done).unwrap();
        assert_eq!(st.cells(), 1000);
        assert!((out.tau - 0.65).abs() < 1e-15);
    }

    #[test]
    fn extension_limit_errors() {
        let cfg = AdaptiveMemoryConfig {
            max_extensions: 1,
            ..Default::default()
        };
        let mut st = MemoryState::zero(10, 4, 1);
        for j in 0..8 {
            st.usage.data[j] = 0.9;
        }
        let mut done = 1;
        let err = adaptive_extend(&mut st, 1.0, &cfg, ExtendMode::Auto, &mut done).unwrap_err();
        assert!(matches!(err, DncError::Capacity(_)));
    }

    #[test]
    fn reads_identical_after_extension() {
        let mut st = MemoryState::zero(6, 3, 1);
        for (i, v) in st.mem.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        for j in 0..5 {
            st.usage.data[j] = 0.8;
        }
        let w = Tensor::from_vec(vec![0.1, 0.0, 0.4, 0.2, 0.3, 0.0]);
        let before = read(&st.mem, &w).unwrap();
        let mut done = 0;
        adaptive_extend(&mut st, 1.0, &AdaptiveMemoryConfig::default(), ExtendMode::Auto, &mut done).unwrap();
        assert_eq!(st.cells(), 12);
        let mut w2 = Tensor::zeros(12, 1);
        w2.data[..6].copy_from_slice(&w.data);
        let after = read(&st.mem, &w2).unwrap();
        assert_eq!(before, after); // bit-identical
        st.validate().unwrap();
    }
}
