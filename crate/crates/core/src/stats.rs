//! Counting statistics over click ensembles: per-window photon numbers,
//! number distributions, intra-bundle interval histograms, intensity time
//! series, rasters, and the generalized bundle correlation g_n^2.
//!
//! Only waveguide clicks (right + left summed) count as signal; free-space
//! clicks never enter the statistics.

use crate::error::{Error, Result};
use crate::trajectories::{rng::CounterRng, EnsembleRecord};

/// Seed of the deterministic bootstrap resampler.
const BOOTSTRAP_SEED: u64 = 0xb007_57a9;
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Per-pulse counting windows: half-open intervals `[c - h, c + h)` around
/// each center.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScheme {
    centers: Vec<f64>,
    half_width: f64,
}

impl WindowScheme {
    pub fn new(mut centers: Vec<f64>, half_width: f64) -> Result<WindowScheme> {
        if centers.is_empty() {
            return Err(Error::InvalidWindows("no window centers".into()));
        }
        if !(half_width > 0.0) {
            return Err(Error::InvalidWindows(format!(
                "half_width {half_width} must be positive"
            )));
        }
        centers.sort_by(|a, b| a.total_cmp(b));
        for pair in centers.windows(2) {
            if pair[1] - pair[0] < 2.0 * half_width - 1e-12 {
                return Err(Error::InvalidWindows(format!(
                    "windows at {} and {} overlap (half_width {half_width})",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(WindowScheme {
            centers,
            half_width,
        })
    }

    /// Tiling windows, one per pulse: each window starts at a pulse peak and
    /// extends to the next (so an entire bundle falls inside its own pulse's
    /// window). For a single shot the window runs from the peak to `t_end`.
    pub fn tiling(peak_times: &[f64], period: f64, t_end: f64) -> Result<WindowScheme> {
        if peak_times.is_empty() {
            return Err(Error::InvalidWindows("no pulse peaks".into()));
        }
        let half = if peak_times.len() > 1 {
            period / 2.0
        } else {
            (t_end - peak_times[0]) / 2.0
        };
        let centers = peak_times.iter().map(|&p| p + half).collect();
        WindowScheme::new(centers, half)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_windows(&self) -> usize {
        self.centers.len()
    }

    /// Check every window sits inside the simulated span.
    pub fn validate_span(&self, t_start: f64, t_end: f64) -> Result<()> {
        let lo = self.centers[0] - self.half_width;
        let hi = self.centers[self.centers.len() - 1] + self.half_width;
        if lo < t_start - 1e-9 || hi > t_end + 1e-9 {
            return Err(Error::InvalidWindows(format!(
                "windows [{lo}, {hi}] extend outside the simulated span [{t_start}, {t_end}]"
            )));
        }
        Ok(())
    }

    /// Index of the window containing `t`, if any.
    pub fn window_of(&self, t: f64) -> Option<usize> {
        let idx = self.centers.partition_point(|&c| c + self.half_width <= t);
        let c = *self.centers.get(idx)?;
        (t >= c - self.half_width && t < c + self.half_width).then_some(idx)
    }
}

/// Waveguide click counts per trajectory per window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCounts {
    n_windows: usize,
    /// counts[trajectory][window]
    counts: Vec<Vec<u32>>,
    /// Waveguide clicks that fell outside every window.
    pub unassigned: u64,
    /// Total waveguide clicks seen.
    pub total_clicks: u64,
}

impl WindowCounts {
    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn n_trajectories(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, trajectory: usize, window: usize) -> u32 {
        self.counts[trajectory][window]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.counts
    }

    /// Fraction of clicks not assigned to any window (leakage diagnostic).
    pub fn leakage_fraction(&self) -> f64 {
        if self.total_clicks == 0 {
            0.0
        } else {
            self.unassigned as f64 / self.total_clicks as f64
        }
    }

    /// Build synthetic counts directly (for estimator tests).
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<WindowCounts> {
        let n_windows = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.is_empty() || n_windows == 0 {
            return Err(Error::NoData("empty window counts".into()));
        }
        if rows.iter().any(|r| r.len() != n_windows) {
            return Err(Error::InvalidWindows("ragged count rows".into()));
        }
        let total = rows.iter().flatten().map(|&c| c as u64).sum();
        Ok(WindowCounts {
            n_windows,
            counts: rows,
            unassigned: 0,
            total_clicks: total,
        })
    }
}

/// Assign every waveguide click to the unique window containing it.
pub fn count_per_window(ensemble: &EnsembleRecord, ws: &WindowScheme) -> Result<WindowCounts> {
    let mut counts = Vec::with_capacity(ensemble.records.len());
    let mut unassigned = 0u64;
    let mut total = 0u64;
    for record in &ensemble.records {
        let mut row = vec![0u32; ws.n_windows()];
        for event in record.events.iter().filter(|e| e.channel.is_waveguide()) {
            total += 1;
            match ws.window_of(event.time) {
                Some(w) => row[w] += 1,
                None => unassigned += 1,
            }
        }
        counts.push(row);
    }
    Ok(WindowCounts {
        n_windows: ws.n_windows(),
        counts,
        unassigned,
        total_clicks: total,
    })
}

/// Empirical photon-number table: (m, probability, binomial standard error).
pub type NumberTable = Vec<(usize, f64, f64)>;

#[derive(Debug, Clone)]
pub struct PhotonNumberDistribution {
    /// One table per window index.
    pub per_window: Vec<NumberTable>,
    /// All windows pooled.
    pub pooled: NumberTable,
}

impl PhotonNumberDistribution {
    /// Pooled probability of exactly `m` clicks.
    pub fn probability(&self, m: usize) -> f64 {
        self.pooled
            .iter()
            .find(|&&(mm, _, _)| mm == m)
            .map(|&(_, p, _)| p)
            .unwrap_or(0.0)
    }
}

pub fn photon_number_distribution(wc: &WindowCounts) -> Result<PhotonNumberDistribution> {
    if wc.n_trajectories() == 0 {
        return Err(Error::NoData("no trajectories".into()));
    }
    let max_m = wc
        .counts
        .iter()
        .flatten()
        .map(|&c| c as usize)
        .max()
        .unwrap_or(0);

    let table = |hist: &[u64], samples: u64| -> NumberTable {
        (0..=max_m)
            .map(|m| {
                let p = hist[m] as f64 / samples as f64;
                let se = (p * (1.0 - p) / samples as f64).sqrt();
                (m, p, se)
            })
            .collect()
    };

    let mut pooled = vec![0u64; max_m + 1];
    let mut per_window = Vec::with_capacity(wc.n_windows);
    for w in 0..wc.n_windows {
        let mut hist = vec![0u64; max_m + 1];
        for row in &wc.counts {
            hist[row[w] as usize] += 1;
        }
        for (p, h) in pooled.iter_mut().zip(&hist) {
            *p += h;
        }
        per_window.push(table(&hist, wc.n_trajectories() as u64));
    }
    let pooled = table(&pooled, (wc.n_trajectories() * wc.n_windows) as u64);
    Ok(PhotonNumberDistribution { per_window, pooled })
}

/// Gaps between successive waveguide clicks inside n-click windows.
#[derive(Debug, Clone)]
pub struct IntervalHistogram {
    pub bin_width: f64,
    /// counts[k] covers gaps in [k*bin_width, (k+1)*bin_width).
    pub bins: Vec<u64>,
    /// Number of windows with exactly n clicks.
    pub qualifying_windows: usize,
    /// Raw gaps, n-1 per qualifying window.
    pub gaps: Vec<f64>,
}

impl IntervalHistogram {
    pub fn median_gap(&self) -> Option<f64> {
        if self.gaps.is_empty() {
            return None;
        }
        let mut sorted = self.gaps.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Some(sorted[sorted.len() / 2])
    }
}

/// Collect successive-click gaps over windows containing exactly `n`
/// waveguide clicks.
pub fn interval_histogram(
    ensemble: &EnsembleRecord,
    ws: &WindowScheme,
    n: usize,
    bin_width: f64,
) -> Result<IntervalHistogram> {
    if n < 2 {
        return Err(Error::InvalidConfig(
            "interval statistics need bundle size n >= 2".into(),
        ));
    }
    if !(bin_width > 0.0) {
        return Err(Error::InvalidConfig("bin width must be positive".into()));
    }
    let mut gaps = Vec::new();
    let mut qualifying = 0usize;
    for record in &ensemble.records {
        // bucket waveguide clicks per window, preserving time order
        let mut per_window: Vec<Vec<f64>> = vec![Vec::new(); ws.n_windows()];
        for event in record.events.iter().filter(|e| e.channel.is_waveguide()) {
            if let Some(w) = ws.window_of(event.time) {
                per_window[w].push(event.time);
            }
        }
        for clicks in per_window.iter().filter(|c| c.len() == n) {
            qualifying += 1;
            for pair in clicks.windows(2) {
                gaps.push(pair[1] - pair[0]);
            }
        }
    }
    if qualifying == 0 {
        return Err(Error::NoData(format!(
            "no windows with exactly {n} waveguide clicks"
        )));
    }
    let max_gap = gaps.iter().fold(0.0f64, |a, &b| a.max(b));
    let n_bins = (max_gap / bin_width).floor() as usize + 1;
    let mut bins = vec![0u64; n_bins];
    for &g in &gaps {
        bins[(g / bin_width) as usize] += 1;
    }
    Ok(IntervalHistogram {
        bin_width,
        bins,
        qualifying_windows: qualifying,
        gaps,
    })
}

/// Generalized bundle correlation estimates at integer window lags.
#[derive(Debug, Clone)]
pub struct CorrelationSeries {
    pub order: usize,
    pub lags: Vec<usize>,
    pub estimates: Vec<f64>,
    /// Trajectory-level bootstrap standard errors (200 resamples).
    pub std_errors: Vec<f64>,
}

/// Falling factorial m (m-1) ... (m-k+1).
fn falling_factorial(m: u32, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        if (m as usize) < i + 1 {
            return 0.0;
        }
        acc *= (m as usize - i) as f64;
    }
    acc
}

/// Correlation of n-photon bundle events at window lag kappa, from falling
/// factorial moments of the window counts:
/// lag 0 uses `<mu_2n(m)> / <mu_n(m)>^2` (the normally ordered same-window
/// moment), lag >= 1 uses `<mu_n(m_w) mu_n(m_w+k)> / (<mu_n(m_w)><mu_n(m_w+k)>)`.
pub fn g_n2(wc: &WindowCounts, n: usize, lags: &[usize]) -> Result<CorrelationSeries> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "correlation order must be >= 1".into(),
        ));
    }
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if max_lag >= wc.n_windows {
        return Err(Error::InvalidWindows(format!(
            "lag {max_lag} needs more than {} windows",
            wc.n_windows
        )));
    }

    let all_rows: Vec<usize> = (0..wc.n_trajectories()).collect();
    let mut estimates = Vec::with_capacity(lags.len());
    let mut std_errors = Vec::with_capacity(lags.len());
    for &lag in lags {
        let est = g_estimate(wc, n, lag, &all_rows).ok_or_else(|| {
            Error::UndefinedEstimate(format!("no {n}-photon factorial moment mass at lag {lag}"))
        })?;
        estimates.push(est);
        std_errors.push(bootstrap_se(wc, n, lag));
    }
    Ok(CorrelationSeries {
        order: n,
        lags: lags.to_vec(),
        estimates,
        std_errors,
    })
}

/// Point estimate over a subset of trajectory rows; None when the
/// denominator vanishes.
fn g_estimate(wc: &WindowCounts, n: usize, lag: usize, rows: &[usize]) -> Option<f64> {
    let w_count = wc.n_windows;
    if lag == 0 {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut samples = 0usize;
        for &i in rows {
            for w in 0..w_count {
                let m = wc.counts[i][w];
                num += falling_factorial(m, 2 * n);
                den += falling_factorial(m, n);
                samples += 1;
            }
        }
        let mean_n = den / samples as f64;
        if mean_n == 0.0 {
            return None;
        }
        Some((num / samples as f64) / (mean_n * mean_n))
    } else {
        let mut num = 0.0;
        let mut mean_a = 0.0;
        let mut mean_b = 0.0;
        let mut samples = 0usize;
        for &i in rows {
            for w in 0..w_count - lag {
                let a = falling_factorial(wc.counts[i][w], n);
                let b = falling_factorial(wc.counts[i][w + lag], n);
                num += a * b;
                mean_a += a;
                mean_b += b;
                samples += 1;
            }
        }
        let mean_a = mean_a / samples as f64;
        let mean_b = mean_b / samples as f64;
        if mean_a == 0.0 || mean_b == 0.0 {
            return None;
        }
        Some((num / samples as f64) / (mean_a * mean_b))
    }
}

fn bootstrap_se(wc: &WindowCounts, n: usize, lag: usize) -> f64 {
    let n_traj = wc.n_trajectories();
    let mut rng = CounterRng::for_stream(BOOTSTRAP_SEED, lag as u64);
    let mut values = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut rows = vec![0usize; n_traj];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in &mut rows {
            *slot = (rng.next_f64() * n_traj as f64) as usize % n_traj;
        }
        if let Some(v) = g_estimate(wc, n, lag, &rows) {
            values.push(v);
        }
    }
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Binned waveguide click rate per trajectory per unit time.
#[derive(Debug, Clone)]
pub struct IntensitySeries {
    pub t_start: f64,
    pub bin_width: f64,
    pub rates: Vec<f64>,
}

impl IntensitySeries {
    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.rates.len())
            .map(|k| self.t_start + (k as f64 + 0.5) * self.bin_width)
            .collect()
    }

    /// Integrated rate over [lo, hi): mean click count in that span.
    /// Exact when the span boundaries align with bin edges.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for (k, &rate) in self.rates.iter().enumerate() {
            let b0 = self.t_start + k as f64 * self.bin_width;
            let b1 = b0 + self.bin_width;
            let overlap = (hi.min(b1) - lo.max(b0)).max(0.0);
            total += rate * overlap;
        }
        total
    }
}

pub fn intensity_series(
    ensemble: &EnsembleRecord,
    bin_width: f64,
    t_start: f64,
    t_end: f64,
) -> Result<IntensitySeries> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidConfig("bin width must be positive".into()));
    }
    if !(t_end > t_start) {
        return Err(Error::InvalidConfig("empty intensity span".into()));
    }
    let n_bins = ((t_end - t_start) / bin_width).ceil() as usize;
    let mut counts = vec![0u64; n_bins];
    for record in &ensemble.records {
        for event in record.events.iter().filter(|e| e.channel.is_waveguide()) {
            if event.time < t_start || event.time >= t_end {
                continue;
            }
            let k = ((event.time - t_start) / bin_width) as usize;
            counts[k.min(n_bins - 1)] += 1;
        }
    }
    let norm = 1.0 / (ensemble.records.len() as f64 * bin_width);
    Ok(IntensitySeries {
        t_start,
        bin_width,
        rates: counts.iter().map(|&c| c as f64 * norm).collect(),
    })
}

/// Classification of one (trajectory, window) cell against the expected
/// bundle size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterClass {
    /// m = n
    FullBundle,
    /// m = n - 1
    OneLoss,
    /// m = n - 2
    TwoLoss,
    Other,
}

impl RasterClass {
    pub fn tag(self) -> &'static str {
        match self {
            RasterClass::FullBundle => "full",
            RasterClass::OneLoss => "loss1",
            RasterClass::TwoLoss => "loss2",
            RasterClass::Other => "other",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RasterCell {
    pub trajectory: usize,
    pub window: usize,
    pub count: u32,
    pub class: RasterClass,
}

#[derive(Debug, Clone)]
pub struct RasterTable {
    pub expected: usize,
    pub cells: Vec<RasterCell>,
}

/// Classify every (trajectory, window) cell by its waveguide click count.
pub fn click_raster(wc: &WindowCounts, expected: usize) -> Result<RasterTable> {
    if expected == 0 {
        return Err(Error::InvalidConfig(
            "expected bundle size must be >= 1".into(),
        ));
    }
    let mut cells = Vec::with_capacity(wc.n_trajectories() * wc.n_windows);
    for (i, row) in wc.counts.iter().enumerate() {
        for (w, &m) in row.iter().enumerate() {
            let class = if m as usize == expected {
                RasterClass::FullBundle
            } else if m as usize + 1 == expected {
                RasterClass::OneLoss
            } else if m as usize + 2 == expected {
                RasterClass::TwoLoss
            } else {
                RasterClass::Other
            };
            cells.push(RasterCell {
                trajectory: i,
                window: w,
                count: m,
                class,
            });
        }
    }
    Ok(RasterTable { expected, cells })
}
