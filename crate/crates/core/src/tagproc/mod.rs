//! Analysis of tag streams: herald conditioning, micro/macro-time split,
//! pseudo-time correlation, time-window selection, fits and coalescence.

mod fit;
mod pipeline;

use std::collections::VecDeque;
use std::io::Write;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::simkit::{TagRecord, CH_D1, CH_D2, CH_HERALD, CH_SYNC};

pub use fit::{
    fit_arrival, fit_hom_peak, fit_lifetime, fit_lifetime_with, ArrivalFit, BinResponse, HomPeakFit,
    HomPeakModel, LifetimeFit, LifetimeModel,
};
pub use pipeline::{
    analyze_pair, analyze_stream, central_histogram, AnalysisOptions, AnalysisReport, RunAccumulation,
    WindowChoice,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Herald with no click at either splitter output. Kept because it occupies a
    /// slot on the pseudo-time axis.
    HeraldOnly,
    Double,
    Triple,
}

/// One heralded laser period. Micro times are ps after the period start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeraldedEvent {
    pub macro_index: u64,
    pub kind: EventKind,
    pub d1_micro: Option<u32>,
    pub d2_micro: Option<u32>,
}

impl HeraldedEvent {
    pub fn new(macro_index: u64, d1_micro: Option<u32>, d2_micro: Option<u32>) -> Self {
        let kind = match (d1_micro, d2_micro) {
            (Some(_), Some(_)) => EventKind::Triple,
            (None, None) => EventKind::HeraldOnly,
            _ => EventKind::Double,
        };
        Self { macro_index, kind, d1_micro, d2_micro }
    }
}

/// Where the laser period comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepSource {
    /// Known period in ps; period k starts at k * rep.
    Known(u64),
    /// Estimate period and phase from sync tags emitted every `decimation` periods.
    FromSync { decimation: u64 },
}

const SYNC_PROBE: usize = 33;

/// Streaming herald conditioning. Consumes a time-sorted stream and yields one
/// event per heralded period; memory is independent of stream length.
pub struct HeraldSelector<I> {
    inner: I,
    source: RepSource,
    rep: u64,
    origin: u64,
    buffered: VecDeque<TagRecord>,
    started: bool,
    cur: Option<u64>,
    herald: bool,
    d1: Option<u32>,
    d2: Option<u32>,
    out_of_order: u64,
    last_ts: u64,
    finished: bool,
}

/// Conditioning on the herald channel. With `RepSource::FromSync` the first sync
/// tags are buffered to estimate the period.
pub fn herald_select<I>(stream: I, source: RepSource) -> HeraldSelector<I::IntoIter>
where
    I: IntoIterator<Item = Result<TagRecord>>,
{
    HeraldSelector {
        inner: stream.into_iter(),
        source,
        rep: 0,
        origin: 0,
        buffered: VecDeque::new(),
        started: false,
        cur: None,
        herald: false,
        d1: None,
        d2: None,
        out_of_order: 0,
        last_ts: 0,
        finished: false,
    }
}

impl<I: Iterator<Item = Result<TagRecord>>> HeraldSelector<I> {
    /// Period in ps (0 before the first call to `next`).
    pub fn rep_period(&self) -> u64 {
        self.rep
    }

    /// Records dropped because they were earlier than their predecessor.
    pub fn out_of_order(&self) -> u64 {
        self.out_of_order
    }

    fn start(&mut self) -> Result<()> {
        self.started = true;
        match self.source {
            RepSource::Known(rep) => {
                if rep == 0 {
                    return invalid("repetition period must be positive");
                }
                self.rep = rep;
            }
            RepSource::FromSync { decimation } => {
                if decimation == 0 {
                    return invalid("sync decimation must be positive");
                }
                let mut syncs = Vec::new();
                while syncs.len() < SYNC_PROBE {
                    match self.inner.next() {
                        Some(r) => {
                            let r = r?;
                            if r.channel == CH_SYNC {
                                syncs.push(r.timestamp);
                            }
                            self.buffered.push_back(r);
                        }
                        None => break,
                    }
                }
                if syncs.len() < 2 {
                    return invalid("stream has no sync information and no repetition period was given");
                }
                let span = (syncs[syncs.len() - 1] - syncs[0]) as f64;
                let rep = (span / ((syncs.len() - 1) as u64 * decimation) as f64).round() as u64;
                if rep == 0 {
                    return invalid("sync tags imply a zero repetition period");
                }
                self.rep = rep;
                self.origin = syncs[0] % rep;
            }
        }
        Ok(())
    }

    fn pull(&mut self) -> Option<Result<TagRecord>> {
        match self.buffered.pop_front() {
            Some(r) => Some(Ok(r)),
            None => self.inner.next(),
        }
    }

    fn flush(&mut self) -> Option<HeraldedEvent> {
        let ev = match self.cur {
            Some(m) if self.herald => Some(HeraldedEvent::new(m, self.d1, self.d2)),
            _ => None,
        };
        self.herald = false;
        self.d1 = None;
        self.d2 = None;
        ev
    }
}

impl<I: Iterator<Item = Result<TagRecord>>> Iterator for HeraldSelector<I> {
    type Item = Result<HeraldedEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        if !self.started {
            if let Err(e) = self.start() {
                self.finished = true;
                return Some(Err(e));
            }
        }
        loop {
            let r = match self.pull() {
                Some(Ok(r)) => r,
                Some(Err(e)) => {
                    self.finished = true;
                    return Some(Err(e));
                }
                None => {
                    self.finished = true;
                    return self.flush().map(Ok);
                }
            };
            if r.timestamp < self.last_ts {
                self.out_of_order += 1;
                continue;
            }
            self.last_ts = r.timestamp;
            if r.channel == CH_SYNC || r.timestamp < self.origin {
                continue;
            }
            let rel = r.timestamp - self.origin;
            let m = rel / self.rep;
            let micro = (rel - m * self.rep) as u32;
            let mut out = None;
            if self.cur != Some(m) {
                out = self.flush();
                self.cur = Some(m);
            }
            match r.channel {
                CH_HERALD => self.herald = true,
                // a second click on one detector in a period is merged into the first
                CH_D1 => self.d1 = self.d1.or(Some(micro)),
                CH_D2 => self.d2 = self.d2.or(Some(micro)),
                _ => {}
            }
            if let Some(e) = out {
                return Some(Ok(e));
            }
        }
    }
}

/// Counts in bins with explicit edges (ps).
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl CoincidenceHistogram {
    /// `n` bins of width `bin` starting at `start`.
    pub fn uniform(start: f64, bin: f64, n: usize) -> Self {
        Self { bin_edges: (0..=n).map(|k| start + k as f64 * bin).collect(), counts: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Poisson errors sqrt(counts).
    pub fn errors(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).sqrt()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if self.bin_edges != other.bin_edges {
            return invalid("histograms have different bins");
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lo_ps,hi_ps,counts,error")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{},{:.4}", self.bin_edges[k], self.bin_edges[k + 1], c, (*c as f64).sqrt())?;
        }
        Ok(())
    }
}

/// Micro-time bin of a time within the period.
#[inline]
fn micro_bin(micro: u32, bin: u64) -> usize {
    (micro as u64 / bin) as usize
}

/// Detection-time histograms relative to the laser period, per detector, split by
/// event kind.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroHistograms {
    pub d1_doubles: CoincidenceHistogram,
    pub d2_doubles: CoincidenceHistogram,
    pub d1_triples: CoincidenceHistogram,
    pub d2_triples: CoincidenceHistogram,
    bin: u64,
}

impl MicroHistograms {
    /// Empty histograms covering [0, rep) in steps of `bin`; the last bin may be short.
    pub fn new(rep: u64, bin: u64) -> Result<Self> {
        if bin == 0 || bin > rep {
            return invalid("micro bin must be in (0, rep]");
        }
        let n = rep.div_ceil(bin) as usize;
        let mut h = CoincidenceHistogram::uniform(0.0, bin as f64, n);
        *h.bin_edges.last_mut().expect("non-empty") = rep as f64;
        Ok(Self { d1_doubles: h.clone(), d2_doubles: h.clone(), d1_triples: h.clone(), d2_triples: h, bin })
    }

    pub fn bin(&self) -> u64 {
        self.bin
    }

    pub fn push(&mut self, e: &HeraldedEvent) {
        let (h1, h2) = match e.kind {
            EventKind::Triple => (&mut self.d1_triples, &mut self.d2_triples),
            EventKind::Double => (&mut self.d1_doubles, &mut self.d2_doubles),
            EventKind::HeraldOnly => return,
        };
        if let Some(m) = e.d1_micro {
            h1.counts[micro_bin(m, self.bin)] += 1;
        }
        if let Some(m) = e.d2_micro {
            h2.counts[micro_bin(m, self.bin)] += 1;
        }
    }

    pub fn add(&mut self, o: &MicroHistograms) -> Result<()> {
        self.d1_doubles.add(&o.d1_doubles)?;
        self.d2_doubles.add(&o.d2_doubles)?;
        self.d1_triples.add(&o.d1_triples)?;
        self.d2_triples.add(&o.d2_triples)
    }

    /// All clicks at one detector (doubles and triples).
    pub fn singles(&self, detector: u8) -> CoincidenceHistogram {
        let (a, b) = if detector == CH_D1 {
            (&self.d1_doubles, &self.d1_triples)
        } else {
            (&self.d2_doubles, &self.d2_triples)
        };
        let mut h = a.clone();
        h.add(b).expect("same bins");
        h
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lo_ps,hi_ps,d1_doubles,d2_doubles,d1_triples,d2_triples")?;
        for k in 0..self.d1_doubles.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.d1_doubles.bin_edges[k],
                self.d1_doubles.bin_edges[k + 1],
                self.d1_doubles.counts[k],
                self.d2_doubles.counts[k],
                self.d1_triples.counts[k],
                self.d2_triples.counts[k]
            )?;
        }
        Ok(())
    }
}

/// Fill micro-time histograms from events.
pub fn micro_histograms<'a>(
    events: impl IntoIterator<Item = &'a HeraldedEvent>,
    rep: u64,
    bin: u64,
) -> Result<MicroHistograms> {
    let mut h = MicroHistograms::new(rep, bin)?;
    for e in events {
        h.push(e);
    }
    Ok(h)
}

/// Area of one peak on the pseudo-time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakArea {
    /// Peak index: nominal center k * rep.
    pub k: i64,
    pub counts: u64,
}

impl PeakArea {
    pub fn sigma(&self) -> f64 {
        (self.counts as f64).sqrt()
    }
}

/// Correlation of D1 and D2 clicks along the pseudo-time axis, where consecutive
/// heralded events are one period apart. Also keeps the joint micro-bin matrix of
/// same-period triples, from which any time window can be applied afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTimeAccumulator {
    rep: u64,
    bin: u64,
    side_peaks: usize,
    ring: VecDeque<(Option<u32>, Option<u32>)>,
    hist: Vec<u64>,
    hist_m0: i64,
    areas: Vec<u64>,
    nb: usize,
    central: Vec<u64>,
}

impl PseudoTimeAccumulator {
    pub fn new(rep: u64, bin: u64, side_peaks: usize) -> Result<Self> {
        if bin == 0 || bin > rep {
            return invalid("bin must be in (0, rep]");
        }
        let half = (side_peaks as f64 + 0.5) * rep as f64;
        let m0 = -(half / bin as f64).ceil() as i64;
        let nh = (2 * -m0 + 1) as usize;
        let nb = rep.div_ceil(bin) as usize;
        Ok(Self {
            rep,
            bin,
            side_peaks,
            ring: VecDeque::with_capacity(side_peaks + 1),
            hist: vec![0; nh],
            hist_m0: m0,
            areas: vec![0; 2 * side_peaks + 1],
            nb,
            central: vec![0; nb * nb],
        })
    }

    pub fn side_peaks(&self) -> usize {
        self.side_peaks
    }

    #[inline]
    fn record(&mut self, tau: i64) {
        let k = (tau as f64 / self.rep as f64).round() as i64;
        if k.unsigned_abs() as usize <= self.side_peaks {
            self.areas[(k + self.side_peaks as i64) as usize] += 1;
        }
        let m = (tau as f64 / self.bin as f64).round() as i64 - self.hist_m0;
        if m >= 0 && (m as usize) < self.hist.len() {
            self.hist[m as usize] += 1;
        }
    }

    pub fn push(&mut self, e: &HeraldedEvent) {
        let rep = self.rep as i64;
        let depth = self.ring.len();
        for d in 0..depth {
            let (p1, p2) = self.ring[depth - 1 - d];
            let s = (d + 1) as i64;
            if let (Some(a), Some(b)) = (p1, e.d2_micro) {
                self.record(b as i64 - a as i64 + s * rep);
            }
            if let (Some(a), Some(b)) = (e.d1_micro, p2) {
                self.record(b as i64 - a as i64 - s * rep);
            }
        }
        if let (Some(a), Some(b)) = (e.d1_micro, e.d2_micro) {
            self.record(b as i64 - a as i64);
            let (i, j) = (micro_bin(a, self.bin), micro_bin(b, self.bin));
            self.central[i * self.nb + j] += 1;
        }
        if self.side_peaks > 0 {
            if self.ring.len() == self.side_peaks {
                self.ring.pop_front();
            }
            self.ring.push_back((e.d1_micro, e.d2_micro));
        }
    }

    /// Peak areas for k = -K..=K, each integrated over +-rep/2 around k * rep.
    pub fn peak_areas(&self) -> Vec<PeakArea> {
        let kk = self.side_peaks as i64;
        (0..self.areas.len()).map(|i| PeakArea { k: i as i64 - kk, counts: self.areas[i] }).collect()
    }

    pub fn central_area(&self) -> u64 {
        self.areas[self.side_peaks]
    }

    /// Mean side-peak area and its Poisson error.
    pub fn side_mean(&self) -> (f64, f64) {
        let n = 2 * self.side_peaks;
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let s: u64 = self.areas.iter().sum::<u64>() - self.central_area();
        (s as f64 / n as f64, (s as f64).sqrt() / n as f64)
    }

    /// Histogram of t2 - t1 on the pseudo-time axis, bins of width `bin` centered on
    /// multiples of `bin`.
    pub fn histogram(&self) -> CoincidenceHistogram {
        let b = self.bin as f64;
        let mut h = CoincidenceHistogram::uniform((self.hist_m0 as f64 - 0.5) * b, b, self.hist.len());
        h.counts.copy_from_slice(&self.hist);
        h
    }

    /// Same-period triples per (D1 micro bin, D2 micro bin), row-major.
    pub fn central_matrix(&self) -> (&[u64], usize) {
        (&self.central, self.nb)
    }

    /// t2 - t1 histogram of same-period triples inside `window`.
    pub fn central_tau_histogram(&self, window: &TimeWindows) -> CoincidenceHistogram {
        let nb = self.nb;
        let b = self.bin as f64;
        let mut h = CoincidenceHistogram::uniform(-(nb as f64 - 0.5) * b, b, 2 * nb - 1);
        for i in window.d1.clone() {
            for j in window.d2.clone() {
                h.counts[j + nb - 1 - i] += self.central[i * nb + j];
            }
        }
        h
    }

    /// Same-period triples inside `window`.
    pub fn windowed_central(&self, window: &TimeWindows) -> u64 {
        let nb = self.nb;
        window.d1.clone().map(|i| window.d2.clone().map(|j| self.central[i * nb + j]).sum::<u64>()).sum()
    }

    pub fn add(&mut self, o: &PseudoTimeAccumulator) -> Result<()> {
        if (self.rep, self.bin, self.side_peaks) != (o.rep, o.bin, o.side_peaks) {
            return invalid("accumulators with different settings");
        }
        for (a, b) in self.hist.iter_mut().zip(&o.hist) {
            *a += b;
        }
        for (a, b) in self.areas.iter_mut().zip(&o.areas) {
            *a += b;
        }
        for (a, b) in self.central.iter_mut().zip(&o.central) {
            *a += b;
        }
        Ok(())
    }
}

/// Pseudo-time correlation of an event list.
pub fn pseudo_time_histogram<'a>(
    events: impl IntoIterator<Item = &'a HeraldedEvent>,
    rep: u64,
    bin: u64,
    n_side_peaks: usize,
) -> Result<PseudoTimeAccumulator> {
    let mut acc = PseudoTimeAccumulator::new(rep, bin, n_side_peaks)?;
    for e in events {
        acc.push(e);
    }
    Ok(acc)
}

/// Accepted micro-time bins per detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeWindows {
    pub d1: Range<usize>,
    pub d2: Range<usize>,
    pub bin: u64,
}

impl TimeWindows {
    pub fn new(d1: Range<usize>, d2: Range<usize>, bin: u64) -> Result<Self> {
        if d1.is_empty() || d2.is_empty() || bin == 0 {
            return invalid("time windows must be non-empty");
        }
        Ok(Self { d1, d2, bin })
    }

    /// Every bin of a period.
    pub fn full(rep: u64, bin: u64) -> Result<Self> {
        let n = rep.div_ceil(bin) as usize;
        Self::new(0..n, 0..n, bin)
    }

    pub fn accepts(&self, e: &HeraldedEvent) -> bool {
        match (e.d1_micro, e.d2_micro) {
            (Some(a), Some(b)) => {
                self.d1.contains(&micro_bin(a, self.bin)) && self.d2.contains(&micro_bin(b, self.bin))
            }
            _ => false,
        }
    }
}

/// Keep triples with both clicks inside the windows. Returns the kept events and
/// the fraction of triples kept.
pub fn time_window_filter<'a>(
    events: impl IntoIterator<Item = &'a HeraldedEvent>,
    windows: &TimeWindows,
) -> Result<(Vec<HeraldedEvent>, f64)> {
    let mut kept = Vec::new();
    let mut total = 0u64;
    for e in events {
        if e.kind == EventKind::Triple {
            total += 1;
            if windows.accepts(e) {
                kept.push(*e);
            }
        }
    }
    if total == 0 {
        return invalid("no triples to select from");
    }
    let eff = kept.len() as f64 / total as f64;
    Ok((kept, eff))
}

/// P_C = (A_perp - A_par) / A_perp with first-order Poisson propagation.
pub fn coalescence(a_perp: f64, a_par: f64) -> Result<(f64, f64)> {
    if !(a_perp > 0.0) {
        return Err(Error::Invalid("orthogonal central area is zero; P_C undefined".into()));
    }
    if a_par < 0.0 {
        return invalid("negative area");
    }
    let p = (a_perp - a_par) / a_perp;
    let var = a_par / (a_perp * a_perp) + a_par * a_par / (a_perp * a_perp * a_perp);
    Ok((p, var.sqrt()))
}

/// Spread of P_C over Poisson resamples of both areas.
pub fn bootstrap_coalescence(a_perp: f64, a_par: f64, draws: usize, seed: u64) -> Result<(f64, f64)> {
    coalescence(a_perp, a_par)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pp = Poisson::new(a_perp).map_err(|e| Error::Invalid(e.to_string()))?;
    let pa = if a_par > 0.0 { Some(Poisson::new(a_par).map_err(|e| Error::Invalid(e.to_string()))?) } else { None };
    let mut v = Vec::with_capacity(draws);
    while v.len() < draws {
        let x: f64 = pp.sample(&mut rng);
        if x <= 0.0 {
            continue;
        }
        let y: f64 = pa.map_or(0.0, |p| p.sample(&mut rng));
        v.push((x - y) / x);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1).max(1) as f64).sqrt();
    Ok((m, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(v: &[(u8, u64)]) -> Vec<Result<TagRecord>> {
        v.iter().map(|&(c, t)| Ok(TagRecord::new(c, t))).collect()
    }

    fn select(v: &[(u8, u64)]) -> Vec<HeraldedEvent> {
        herald_select(recs(v), RepSource::Known(12200)).map(|e| e.unwrap()).collect()
    }

    #[test]
    fn double_and_triple() {
        let ev = select(&[(0, 1024), (1, 2048), (0, 12200 + 1024), (1, 12200 + 2048), (2, 12200 + 2176)]);
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].kind, EventKind::Double);
        assert_eq!(ev[0].d1_micro, Some(2048));
        assert_eq!(ev[1].kind, EventKind::Triple);
        assert_eq!(ev[1].macro_index, 1);
        assert_eq!(ev[1].d2_micro, Some(2176));
    }

    #[test]
    fn unheralded_clicks_ignored() {
        let ev = select(&[(1, 1024), (2, 2048), (0, 24400 + 100), (3, 36600)]);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::HeraldOnly);
    }

    #[test]
    fn repeated_clicks_merged() {
        let ev = select(&[(0, 100), (1, 2000), (1, 3000)]);
        assert_eq!(ev[0].d1_micro, Some(2000));
    }

    #[test]
    fn sync_required_without_period() {
        let mut s = herald_select(recs(&[(0, 100), (1, 2000)]), RepSource::FromSync { decimation: 1 });
        assert!(s.next().unwrap().is_err());
        let v: Vec<(u8, u64)> =
            (0..40u64).flat_map(|k| [(3u8, k * 12200), (0, k * 12200 + 1000)]).collect();
        let ev: Vec<_> = herald_select(recs(&v), RepSource::FromSync { decimation: 1 }).map(|e| e.unwrap()).collect();
        assert_eq!(ev.len(), 40);
        assert!(ev.iter().enumerate().all(|(k, e)| e.macro_index == k as u64));
    }

    #[test]
    fn pseudo_time_pairs() {
        let ev = [
            HeraldedEvent::new(0, Some(2000), None),
            HeraldedEvent::new(50, None, None),
            HeraldedEvent::new(900, None, Some(2100)),
            HeraldedEvent::new(901, Some(2000), Some(2000)),
        ];
        let acc = pseudo_time_histogram(&ev, 12200, 128, 3).unwrap();
        let a = acc.peak_areas();
        assert_eq!(acc.central_area(), 1);
        // D1 of event 0 with D2 of event 2 (+2) and of event 3 (+3); D2 of event 2 with D1 of event 3 (-1)
        assert_eq!(a[3 + 2].counts, 1);
        assert_eq!(a[3 + 3].counts, 1);
        assert_eq!(a[3 - 1].counts, 1);
        assert_eq!(acc.histogram().total(), 4);
    }

    #[test]
    fn empty_inputs() {
        let h = micro_histograms(&[], 12200, 128).unwrap();
        assert_eq!(h.d1_doubles.len(), 96);
        assert_eq!(h.d1_doubles.total() + h.d2_triples.total(), 0);
        assert!(time_window_filter(&[], &TimeWindows::full(12200, 128).unwrap()).is_err());
        assert!(TimeWindows::new(3..3, 0..1, 128).is_err());
    }

    #[test]
    fn coalescence_arithmetic() {
        let (p, s) = coalescence(1000.0, 610.0).unwrap();
        assert!((p - 0.39).abs() < 1e-12);
        assert!((s - 0.03134).abs() < 1e-4, "{s}");
        assert_eq!(coalescence(500.0, 500.0).unwrap().0, 0.0);
        assert!(coalescence(0.0, 3.0).is_err());
    }
}
