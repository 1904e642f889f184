//! Scenarios, events and the local-orthogonality relation.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense tables larger than this are rejected.
pub const TABLE_CAP: usize = 10_000_000;

/// Number of parties, inputs per party and outputs per party.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScenario")]
pub struct Scenario {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
}

#[derive(Deserialize)]
struct RawScenario {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
}

impl TryFrom<RawScenario> for Scenario {
    type Error = Error;

    fn try_from(raw: RawScenario) -> Result<Self> {
        Scenario::new(raw.inputs, raw.outputs)
    }
}

impl Scenario {
    pub fn new(inputs: Vec<usize>, outputs: Vec<usize>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Scenario("at least one party is required".into()));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::Scenario(format!("{} input counts but {} output counts", inputs.len(), outputs.len())));
        }
        if let Some(k) = inputs.iter().position(|&m| m == 0) {
            return Err(Error::Scenario(format!("party {k} has no inputs")));
        }
        if let Some(k) = outputs.iter().position(|&d| d < 2) {
            return Err(Error::Scenario(format!("party {k} has fewer than two outputs")));
        }
        let scenario = Self { inputs, outputs };
        let len = scenario
            .inputs
            .iter()
            .chain(&scenario.outputs)
            .try_fold(1usize, |acc, &v| acc.checked_mul(v))
            .unwrap_or(usize::MAX);
        if len > TABLE_CAP {
            return Err(Error::TooLarge(len, TABLE_CAP));
        }
        Ok(scenario)
    }

    /// Every party gets the same number of inputs and outputs.
    pub fn uniform(parties: usize, inputs: usize, outputs: usize) -> Result<Self> {
        Self::new(vec![inputs; parties], vec![outputs; parties])
    }

    /// Two parties, two inputs, two outputs.
    pub fn chsh() -> Self {
        Self::uniform(2, 2, 2).expect("valid scenario")
    }

    pub fn num_parties(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn num_input_tuples(&self) -> usize {
        self.inputs.iter().product()
    }

    pub fn num_output_tuples(&self) -> usize {
        self.outputs.iter().product()
    }

    pub fn table_len(&self) -> usize {
        self.num_input_tuples() * self.num_output_tuples()
    }

    /// Flat table position of `(outputs | inputs)`: input tuples slowest,
    /// party 0 slowest within each tuple.
    pub fn table_index(&self, inputs: &[usize], outputs: &[usize]) -> usize {
        mixed_radix(inputs, &self.inputs) * self.num_output_tuples() + mixed_radix(outputs, &self.outputs)
    }

    /// Inverse of [`Scenario::table_index`].
    pub fn table_tuple(&self, index: usize) -> (Vec<usize>, Vec<usize>) {
        let nout = self.num_output_tuples();
        (unmix(index / nout, &self.inputs), unmix(index % nout, &self.outputs))
    }

    /// All input tuples in table order.
    pub fn input_tuples(&self) -> TupleIter {
        TupleIter::new(self.inputs.clone())
    }

    /// All output tuples in table order.
    pub fn output_tuples(&self) -> TupleIter {
        TupleIter::new(self.outputs.clone())
    }

    /// The scenario restricted to `parties` (kept in the given order).
    pub fn restrict(&self, parties: &[usize]) -> Result<Self> {
        Self::new(parties.iter().map(|&k| self.inputs[k]).collect(), parties.iter().map(|&k| self.outputs[k]).collect())
    }

    /// Parties of `self` followed by parties of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        Self::new(
            self.inputs.iter().chain(&other.inputs).copied().collect(),
            self.outputs.iter().chain(&other.outputs).copied().collect(),
        )
    }

    pub fn check_event(&self, event: &Event) -> Result<()> {
        for a in event.assignments() {
            if a.party >= self.num_parties() {
                return Err(Error::Event(format!("party {} out of range in {event}", a.party)));
            }
            if a.input >= self.inputs[a.party] || a.output >= self.outputs[a.party] {
                return Err(Error::Event(format!("assignment out of range in {event}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, d) in self.inputs.iter().zip(&self.outputs) {
            write!(f, "[{m}/{d}]")?;
        }
        Ok(())
    }
}

pub(crate) fn mixed_radix(digits: &[usize], radices: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

pub(crate) fn unmix(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = index % r;
        index /= r;
    }
    out
}

/// Odometer over tuples with per-position radices, last position fastest.
#[derive(Debug, Clone)]
pub struct TupleIter {
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl TupleIter {
    pub fn new(radices: Vec<usize>) -> Self {
        let next = if radices.iter().all(|&r| r > 0) { Some(vec![0; radices.len()]) } else { None };
        Self { radices, next }
    }
}

impl Iterator for TupleIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] < self.radices[pos] {
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(current)
    }
}

/// One party's measurement record within an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment {
    pub party: usize,
    pub input: usize,
    pub output: usize,
}

impl Assignment {
    pub fn new(party: usize, input: usize, output: usize) -> Self {
        Self { party, input, output }
    }
}

/// A partial assignment of (input, output) pairs to parties. The empty event
/// is the null event φ.
///
/// Events order by number of parties, then party set, then inputs, then
/// outputs, which is the row order of moment matrices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Event {
    assignments: Vec<Assignment>,
}

impl Event {
    pub fn null() -> Self {
        Self::default()
    }

    /// Builds an event; assignments are sorted by party and must not repeat a party.
    pub fn new(mut assignments: Vec<Assignment>) -> Result<Self> {
        assignments.sort();
        if assignments.windows(2).any(|w| w[0].party == w[1].party) {
            return Err(Error::Event("party assigned twice".into()));
        }
        Ok(Self { assignments })
    }

    pub fn single(party: usize, input: usize, output: usize) -> Self {
        Self { assignments: vec![Assignment::new(party, input, output)] }
    }

    /// Event over parties `0..n` with the given tuples.
    pub fn full(inputs: &[usize], outputs: &[usize]) -> Self {
        Self {
            assignments: inputs.iter().zip(outputs).enumerate().map(|(k, (&x, &a))| Assignment::new(k, x, a)).collect(),
        }
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn is_null(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn get(&self, party: usize) -> Option<&Assignment> {
        self.assignments.binary_search_by_key(&party, |a| a.party).ok().map(|i| &self.assignments[i])
    }

    pub fn parties(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().map(|a| a.party)
    }

    /// Union of two events that agree on their common parties.
    pub fn merge(&self, other: &Event) -> Result<Event> {
        let mut out = self.assignments.clone();
        for a in &other.assignments {
            match self.get(a.party) {
                Some(b) if b == a => {}
                Some(_) => return Err(Error::Event(format!("{self} and {other} conflict on party {}", a.party))),
                None => out.push(*a),
            }
        }
        Event::new(out)
    }

    pub fn all_outputs_nonzero(&self) -> bool {
        self.assignments.iter().all(|a| a.output != 0)
    }

    fn key(&self) -> (usize, Vec<usize>, Vec<usize>, Vec<usize>) {
        (
            self.len(),
            self.assignments.iter().map(|a| a.party).collect(),
            self.assignments.iter().map(|a| a.input).collect(),
            self.assignments.iter().map(|a| a.output).collect(),
        )
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| self.key().cmp(&other.key()))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `phi` for the null event, otherwise `party:output|input` joined by commas.
impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            return write!(f, "phi");
        }
        for (i, a) in self.assignments.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}|{}", a.party, a.output, a.input)?;
        }
        Ok(())
    }
}

impl FromStr for Event {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "phi" {
            return Ok(Event::null());
        }
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad event `{s}`")));
        let mut out = Vec::new();
        for part in s.split(',') {
            let (party, rest) = part.split_once(':').ok_or_else(|| Error::Parse(format!("bad event `{s}`")))?;
            let (output, input) = rest.split_once('|').ok_or_else(|| Error::Parse(format!("bad event `{s}`")))?;
            out.push(Assignment::new(parse(party)?, parse(input)?, parse(output)?));
        }
        Event::new(out)
    }
}

impl Serialize for Event {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Event {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// True iff some common party uses the same input with different outputs.
pub fn locally_orthogonal(e1: &Event, e2: &Event) -> bool {
    e1.assignments().iter().any(|a| e2.get(a.party).is_some_and(|b| b.input == a.input && b.output != a.output))
}

/// Relaxation level of the moment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    /// Rows for events over every nonempty party subset.
    #[serde(rename = "almost-quantum")]
    AlmostQuantum,
    /// Rows for single-party events only.
    #[serde(rename = "q1")]
    Q1,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::AlmostQuantum => "almost-quantum",
            Level::Q1 => "q1",
        })
    }
}

/// Party subsets ordered by size, then lexicographically.
pub fn subsets_by_size(n: usize, max_size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for k in start..n {
            cur.push(k);
            rec(k + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..=max_size.min(n) {
        rec(0, n, size, &mut Vec::new(), &mut out);
    }
    out
}

/// Events with all outputs nonzero restricted to `parties`, ordered by
/// inputs then outputs.
pub(crate) fn nonzero_events_on(scenario: &Scenario, parties: &[usize]) -> Vec<Event> {
    let ins: Vec<usize> = parties.iter().map(|&k| scenario.inputs()[k]).collect();
    let outs: Vec<usize> = parties.iter().map(|&k| scenario.outputs()[k] - 1).collect();
    let mut events = Vec::new();
    for xs in TupleIter::new(ins) {
        for os in TupleIter::new(outs.clone()) {
            events.push(Event {
                assignments: parties
                    .iter()
                    .zip(xs.iter().zip(&os))
                    .map(|(&k, (&x, &o))| Assignment::new(k, x, o + 1))
                    .collect(),
            });
        }
    }
    events
}

/// Moment-matrix index: φ first, then nonzero-output events grouped by party
/// subset (size, then lexicographic), each group ordered by inputs then outputs.
pub fn enumerate_events(scenario: &Scenario, level: Level) -> Vec<Event> {
    let max_size = match level {
        Level::AlmostQuantum => scenario.num_parties(),
        Level::Q1 => 1,
    };
    let mut events = vec![Event::null()];
    for subset in subsets_by_size(scenario.num_parties(), max_size) {
        events.extend(nonzero_events_on(scenario, &subset));
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str) -> Event {
        s.parse().unwrap()
    }

    #[test]
    fn scenario_rejects_bad_shapes() {
        assert!(Scenario::new(vec![2], vec![2, 2]).is_err());
        assert!(Scenario::new(vec![0, 2], vec![2, 2]).is_err());
        assert!(Scenario::new(vec![2, 2], vec![1, 2]).is_err());
        assert!(matches!(Scenario::uniform(30, 2, 2), Err(Error::TooLarge(..))));
    }

    #[test]
    fn table_index_roundtrip() {
        let s = Scenario::new(vec![3, 2], vec![3, 2]).unwrap();
        for i in 0..s.table_len() {
            let (x, a) = s.table_tuple(i);
            assert_eq!(s.table_index(&x, &a), i);
        }
        // party 0 slowest
        assert_eq!(s.table_index(&[0, 1], &[0, 0]), 6);
        assert_eq!(s.table_index(&[1, 0], &[0, 0]), 12);
    }

    #[test]
    fn orthogonality_examples() {
        assert!(locally_orthogonal(&ev("0:1|0"), &ev("0:0|0")));
        assert!(!locally_orthogonal(&ev("0:1|0"), &ev("0:1|1")));
        assert!(locally_orthogonal(&ev("0:0|0,1:0|0"), &ev("0:1|0,1:0|1")));
        let e = ev("0:1|0,1:1|1");
        assert!(!locally_orthogonal(&e, &e));
        assert!(!locally_orthogonal(&Event::null(), &e));
    }

    #[test]
    fn chsh_index_order() {
        let idx = enumerate_events(&Scenario::chsh(), Level::AlmostQuantum);
        let names: Vec<String> = idx.iter().map(|e| e.to_string()).collect();
        assert_eq!(
            names,
            ["phi", "0:1|0", "0:1|1", "1:1|0", "1:1|1", "0:1|0,1:1|0", "0:1|0,1:1|1", "0:1|1,1:1|0", "0:1|1,1:1|1"]
        );
        assert_eq!(enumerate_events(&Scenario::chsh(), Level::Q1).len(), 5);
        let single = Scenario::new(vec![1], vec![2]).unwrap();
        assert_eq!(enumerate_events(&single, Level::AlmostQuantum).len(), 2);
    }

    #[test]
    fn index_is_sorted_by_event_order() {
        let s = Scenario::new(vec![2, 3, 1], vec![3, 2, 2]).unwrap();
        let idx = enumerate_events(&s, Level::AlmostQuantum);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bipartite_count_formula() {
        for (ma, da, mb, db) in [(2, 2, 2, 2), (3, 3, 2, 3), (4, 4, 2, 4), (2, 3, 4, 2)] {
            let s = Scenario::new(vec![ma, mb], vec![da, db]).unwrap();
            let expected = 1 + ma * (da - 1) + mb * (db - 1) + ma * mb * (da - 1) * (db - 1);
            assert_eq!(enumerate_events(&s, Level::AlmostQuantum).len(), expected);
        }
    }

    #[test]
    fn event_parse_display_roundtrip() {
        for s in ["phi", "0:1|0", "0:2|1,3:1|0"] {
            assert_eq!(ev(s).to_string(), s);
        }
        assert!("0:1|0,0:1|1".parse::<Event>().is_err());
        assert!("garbage".parse::<Event>().is_err());
    }

    #[test]
    fn tuple_iter_counts() {
        assert_eq!(TupleIter::new(vec![2, 3]).count(), 6);
        assert_eq!(TupleIter::new(vec![]).count(), 1);
        let v: Vec<_> = TupleIter::new(vec![2, 2]).collect();
        assert_eq!(v, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }
}
