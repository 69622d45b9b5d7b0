//! Sifting: match Bob's events with Alice's plan and accumulate the
//! per-intensity detection and error tables.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::params::{Basis, IntensityClass};
use crate::rx::{DetectionEvent, DetectorId};
use crate::tx::SymbolPlan;

type Cells = [[[f64; 3]; 3]; 3];

/// Detection (`n`) and error (`m`) counts keyed by (Alice basis, Bob basis,
/// intensity), with the number of symbols Alice sent per (basis, intensity)
/// while Bob could measure that basis.
///
/// Cells are `f64` so the closed-form engine can store expectations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountsTable {
    n: Cells,
    m: Cells,
    sent: [[f64; 3]; 3],
    /// Accumulation time with Bob measuring each basis (s).
    pub time_per_basis: [f64; 3],
    /// Symbols with more than one valid event; only the earliest was kept.
    pub conflicts: u64,
    /// Satellite events, which carry no bit.
    pub invalid: u64,
    /// Events that matched no planned symbol.
    pub unmatched: u64,
}

impl CountsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self, alice: Basis, bob: Basis, k: IntensityClass) -> f64 {
        self.n[alice.index()][bob.index()][k.index()]
    }

    pub fn m(&self, alice: Basis, bob: Basis, k: IntensityClass) -> f64 {
        self.m[alice.index()][bob.index()][k.index()]
    }

    pub fn sent(&self, basis: Basis, k: IntensityClass) -> f64 {
        self.sent[basis.index()][k.index()]
    }

    /// Matched-basis detections.
    pub fn detections(&self, basis: Basis, k: IntensityClass) -> f64 {
        self.n(basis, basis, k)
    }

    /// Matched-basis errors.
    pub fn errors(&self, basis: Basis, k: IntensityClass) -> f64 {
        self.m(basis, basis, k)
    }

    /// Matched-basis detections summed over intensities.
    pub fn total_detections(&self, basis: Basis) -> f64 {
        IntensityClass::ALL.iter().map(|&k| self.detections(basis, k)).sum()
    }

    pub fn total_errors(&self, basis: Basis) -> f64 {
        IntensityClass::ALL.iter().map(|&k| self.errors(basis, k)).sum()
    }

    pub fn add_detection(&mut self, alice: Basis, bob: Basis, k: IntensityClass, n: f64, m: f64) {
        self.n[alice.index()][bob.index()][k.index()] += n;
        self.m[alice.index()][bob.index()][k.index()] += m;
    }

    pub fn add_sent(&mut self, basis: Basis, k: IntensityClass, count: f64) {
        self.sent[basis.index()][k.index()] += count;
    }

    /// Field-wise sum.
    pub fn merge(&mut self, other: &CountsTable) {
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..3 {
                    self.n[a][b][k] += other.n[a][b][k];
                    self.m[a][b][k] += other.m[a][b][k];
                }
            }
            for k in 0..3 {
                self.sent[a][k] += other.sent[a][k];
            }
            self.time_per_basis[a] += other.time_per_basis[a];
        }
        self.conflicts += other.conflicts;
        self.invalid += other.invalid;
        self.unmatched += other.unmatched;
    }

    pub fn merged(mut self, other: &CountsTable) -> Self {
        self.merge(other);
        self
    }

    /// Checks `0 ≤ m ≤ n ≤ N` on every matched-basis cell.
    pub fn is_consistent(&self) -> bool {
        Basis::ALL.iter().all(|&b| {
            IntensityClass::ALL.iter().all(|&k| {
                let (n, m, s) = (self.detections(b, k), self.errors(b, k), self.sent(b, k));
                0.0 <= m && m <= n && n <= s
            })
        })
    }

    /// One row per (alice_basis, bob_basis, intensity); `sent` is Alice's count
    /// for the row's basis and intensity.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "alice_basis,bob_basis,intensity,n,m,sent")?;
        for a in Basis::ALL {
            for b in Basis::ALL {
                for k in IntensityClass::ALL {
                    writeln!(w, "{a},{b},{k},{},{},{}", self.n(a, b, k), self.m(a, b, k), self.sent(a, k))?;
                }
            }
        }
        Ok(())
    }
}

/// Matched-basis error rate of one intensity.
pub fn qber_of(table: &CountsTable, basis: Basis, intensity: IntensityClass) -> Result<f64> {
    let n = table.detections(basis, intensity);
    if n <= 0.0 {
        return Err(Error::EmptyCell("no detections in cell"));
    }
    Ok(table.errors(basis, intensity) / n)
}

/// Matched-basis detection probability per sent symbol.
pub fn gain_of(table: &CountsTable, basis: Basis, intensity: IntensityClass) -> Result<f64> {
    let sent = table.sent(basis, intensity);
    if sent <= 0.0 {
        return Err(Error::EmptyCell("no symbols sent in cell"));
    }
    Ok(table.detections(basis, intensity) / sent)
}

/// Error rate of a basis over all intensities.
pub fn basis_qber(table: &CountsTable, basis: Basis) -> Result<f64> {
    let n = table.total_detections(basis);
    if n <= 0.0 {
        return Err(Error::EmptyCell("no detections in basis"));
    }
    Ok(table.total_errors(basis) / n)
}

/// Streaming sifter. Feed it events in time order together with the plans of
/// the symbols they may refer to; one winning event per symbol is recorded.
///
/// Invalid (satellite) events are dropped before duplicates are resolved. Of
/// several valid events the earliest wins; exact ties go to the Z detector,
/// then to port 1.
#[derive(Debug, Default)]
pub struct Sifter {
    table: CountsTable,
    pending: Option<(DetectionEvent, SymbolPlan)>,
}

fn beats(a: &DetectionEvent, b: &DetectionEvent) -> bool {
    match a.timestamp.total_cmp(&b.timestamp) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => rank(a.detector) < rank(b.detector),
    }
}

fn rank(d: DetectorId) -> u8 {
    match d {
        DetectorId::Z => 0,
        DetectorId::Port1(_) => 1,
        DetectorId::Port2(_) => 2,
    }
}

impl Sifter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self) -> &CountsTable {
        &self.table
    }

    /// Records symbols as sent; `bob_bases` are the bases Bob's receiver measured.
    pub fn add_sent(&mut self, plans: &[SymbolPlan], bob_bases: &[Basis]) {
        let mut counts = [[0u64; 3]; 3];
        for p in plans {
            counts[p.basis.index()][p.intensity.index()] += 1;
        }
        self.add_sent_counts(&counts, bob_bases);
    }

    /// Adds symbols sent, tallied as `counts[basis][intensity]`.
    pub fn add_sent_counts(&mut self, counts: &[[u64; 3]; 3], bob_bases: &[Basis]) {
        for &b in bob_bases {
            for k in IntensityClass::ALL {
                self.table.add_sent(b, k, counts[b.index()][k.index()] as f64);
            }
        }
    }

    /// Processes events whose symbols are described by `plans`, a contiguous
    /// run of indices.
    pub fn process(&mut self, events: &[DetectionEvent], plans: &[SymbolPlan]) {
        let first = plans.first().map_or(0, |p| p.index);
        self.process_with(events, |i| i.checked_sub(first).and_then(|o| plans.get(o as usize)).copied());
    }

    /// Like [`Sifter::process`], with plans looked up by symbol index.
    pub fn process_with(&mut self, events: &[DetectionEvent], plan_of: impl Fn(u64) -> Option<SymbolPlan>) {
        for e in events {
            if !e.is_valid() {
                self.table.invalid += 1;
                continue;
            }
            if let Some((pe, _)) = &self.pending {
                if pe.symbol_index == e.symbol_index {
                    self.table.conflicts += 1;
                    if beats(e, pe) {
                        let plan = self.pending.take().unwrap().1;
                        self.pending = Some((*e, plan));
                    }
                    continue;
                }
            }
            let Some(plan) = plan_of(e.symbol_index) else {
                self.table.unmatched += 1;
                continue;
            };
            self.flush();
            self.pending = Some((*e, plan));
        }
    }

    fn flush(&mut self) {
        if let Some((e, plan)) = self.pending.take() {
            let bit = e.bit.expect("only valid events are pending");
            let error = if plan.basis == e.bob_basis && bit != plan.bit { 1.0 } else { 0.0 };
            self.table.add_detection(plan.basis, e.bob_basis, plan.intensity, 1.0, error);
        }
    }

    pub fn finish(mut self) -> CountsTable {
        self.flush();
        self.table
    }
}

/// One-shot sifting of a complete event list against its plan.
pub fn sift_and_accumulate(plans: &[SymbolPlan], events: &[DetectionEvent], bob_bases: &[Basis]) -> CountsTable {
    let mut s = Sifter::new();
    s.add_sent(plans, bob_bases);
    s.process(events, plans);
    s.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Bit;
    use crate::rx::Slot;
    use proptest::prelude::*;

    fn plan(index: u64, basis: Basis, bit: Bit, intensity: IntensityClass) -> SymbolPlan {
        SymbolPlan { index, basis, bit, intensity, phase_block_id: index }
    }

    fn event(symbol_index: u64, bob_basis: Basis, bit: Option<Bit>, t: f64, detector: DetectorId) -> DetectionEvent {
        let slot = match (detector, bit) {
            (_, None) => Slot::Satellite,
            (DetectorId::Z, Some(Bit::Zero)) => Slot::Early,
            (DetectorId::Z, _) => Slot::Late,
            _ => Slot::Interference,
        };
        DetectionEvent { symbol_index, bob_basis, bit, slot, timestamp: t, detector }
    }

    #[test]
    fn matched_and_mismatched() {
        let plans =
            [plan(0, Basis::Z, Bit::Zero, IntensityClass::Signal), plan(1, Basis::X, Bit::One, IntensityClass::Decoy)];
        let events = [
            event(0, Basis::Z, Some(Bit::Zero), 0.25e-9, DetectorId::Z),
            event(1, Basis::Z, Some(Bit::One), 1.75e-9, DetectorId::Z),
        ];
        let t = sift_and_accumulate(&plans, &events, &[Basis::Z]);
        assert_eq!(t.n(Basis::Z, Basis::Z, IntensityClass::Signal), 1.0);
        assert_eq!(t.m(Basis::Z, Basis::Z, IntensityClass::Signal), 0.0);
        assert_eq!(t.n(Basis::X, Basis::Z, IntensityClass::Decoy), 1.0);
        assert_eq!(t.total_detections(Basis::X), 0.0);
        assert!(t.is_consistent());
    }

    #[test]
    fn errors_and_vacuum() {
        let plans = [plan(0, Basis::Z, Bit::One, IntensityClass::Vacuum)];
        let events = [event(0, Basis::Z, Some(Bit::Zero), 0.25e-9, DetectorId::Z)];
        let t = sift_and_accumulate(&plans, &events, &[Basis::Z]);
        assert_eq!(t.n(Basis::Z, Basis::Z, IntensityClass::Vacuum), 1.0);
        assert_eq!(t.m(Basis::Z, Basis::Z, IntensityClass::Vacuum), 1.0);
    }

    #[test]
    fn duplicates_keep_earliest() {
        let plans = [plan(0, Basis::X, Bit::Zero, IntensityClass::Signal)];
        let events = [
            event(0, Basis::X, None, 0.25e-9, DetectorId::Port2(Basis::X)),
            event(0, Basis::X, Some(Bit::One), 0.75e-9, DetectorId::Port2(Basis::X)),
            event(0, Basis::X, Some(Bit::Zero), 0.75e-9, DetectorId::Port1(Basis::X)),
        ];
        let t = sift_and_accumulate(&plans, &events, &[Basis::X]);
        assert_eq!((t.invalid, t.conflicts), (1, 1));
        assert_eq!(t.detections(Basis::X, IntensityClass::Signal), 1.0);
        assert_eq!(t.errors(Basis::X, IntensityClass::Signal), 0.0);

        let z = [plan(0, Basis::Z, Bit::One, IntensityClass::Signal)];
        let events = [
            event(0, Basis::Z, Some(Bit::Zero), 0.25e-9, DetectorId::Z),
            event(0, Basis::Z, Some(Bit::One), 0.75e-9, DetectorId::Z),
        ];
        let t = sift_and_accumulate(&z, &events, &[Basis::Z]);
        assert_eq!(t.errors(Basis::Z, IntensityClass::Signal), 1.0);
    }

    #[test]
    fn unmatched_events_counted() {
        let plans = [plan(10, Basis::Z, Bit::One, IntensityClass::Signal)];
        let t = sift_and_accumulate(&plans, &[event(3, Basis::Z, Some(Bit::One), 6.5e-9, DetectorId::Z)], &[Basis::Z]);
        assert_eq!(t.unmatched, 1);
        assert_eq!(t.total_detections(Basis::Z), 0.0);
    }

    #[test]
    fn empty_cells_are_explicit() {
        let t = CountsTable::new();
        assert!(matches!(qber_of(&t, Basis::Z, IntensityClass::Signal), Err(Error::EmptyCell(_))));
        assert!(matches!(gain_of(&t, Basis::X, IntensityClass::Decoy), Err(Error::EmptyCell(_))));
        let mut t = CountsTable::new();
        t.add_detection(Basis::Z, Basis::Z, IntensityClass::Signal, 10.0, 0.0);
        assert_eq!(qber_of(&t, Basis::Z, IntensityClass::Signal).unwrap(), 0.0);
    }

    #[test]
    fn csv_rows() {
        let mut t = CountsTable::new();
        t.add_detection(Basis::Z, Basis::Z, IntensityClass::Signal, 5.0, 1.0);
        t.add_sent(Basis::Z, IntensityClass::Signal, 100.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 28);
        assert_eq!(lines[0], "alice_basis,bob_basis,intensity,n,m,sent");
        assert_eq!(lines[1], "Z,Z,s,5,1,100");
    }

    fn arb_table() -> impl Strategy<Value = CountsTable> {
        (prop::collection::vec((0.0f64..1e6, 0.0f64..1.0), 27), prop::collection::vec(0.0f64..1e9, 9), 0u64..100)
            .prop_map(|(cells, sent, c)| {
                let mut t = CountsTable::new();
                for (i, (n, frac)) in cells.into_iter().enumerate() {
                    let (a, b, k) = (Basis::ALL[i / 9], Basis::ALL[i / 3 % 3], IntensityClass::ALL[i % 3]);
                    t.add_detection(a, b, k, n.round(), (n * frac).round());
                }
                for (i, s) in sent.into_iter().enumerate() {
                    t.add_sent(Basis::ALL[i / 3], IntensityClass::ALL[i % 3], s.round());
                }
                t.conflicts = c;
                t.time_per_basis = [1.0, 2.0, 3.0];
                t
            })
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(a in arb_table(), b in arb_table(), c in arb_table()) {
            // Integer-valued cells below 2^53 add exactly.
            let left = a.clone().merged(&b).merged(&c);
            let right = a.clone().merged(&b.clone().merged(&c));
            prop_assert_eq!(&left, &right);
            prop_assert_eq!(a.clone().merged(&b), b.clone().merged(&a));
        }
    }
}
