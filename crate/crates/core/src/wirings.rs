//! Classical operations on boxes: post-selection, composition, grouping of
//! parties under adaptive wirings, and merging of outcomes.

use serde::{Deserialize, Serialize};

use crate::boxes::ProbBox;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scenario::{Assignment, Event, Scenario};

/// Smallest conditioning probability accepted by [`post_select`].
pub const MIN_CONDITION_PROB: f64 = 1e-9;

/// Conditions on party `k` obtaining `output` for `input` and removes it.
pub fn post_select<T: Scalar>(b: &ProbBox<T>, k: usize, input: usize, output: usize) -> Result<ProbBox<T>> {
    let s = b.scenario();
    let n = s.num_parties();
    if n < 2 {
        return Err(Error::Wiring("post-selection needs at least two parties".into()));
    }
    if k >= n || input >= s.inputs()[k] || output >= s.outputs()[k] {
        return Err(Error::Wiring(format!("no event {k}:{output}|{input} in {s}")));
    }
    let p = b.marginal(&Event::single(k, input, output));
    if p.to_f64_lossy() < MIN_CONDITION_PROB {
        return Err(Error::ZeroProbability(p.to_f64_lossy()));
    }
    let rest: Vec<usize> = (0..n).filter(|&j| j != k).collect();
    let scenario = s.restrict(&rest)?;
    let insert = |v: &[usize], at: usize| {
        let mut out = v.to_vec();
        out.insert(k, at);
        out
    };
    Ok(ProbBox::from_fn(scenario, |xs, a| b.prob(&insert(xs, input), &insert(a, output)).clone() / p.clone()))
}

/// Independent boxes side by side; the parties of `second` follow those of `first`.
pub fn compose<T: Scalar>(first: &ProbBox<T>, second: &ProbBox<T>) -> Result<ProbBox<T>> {
    let scenario = first.scenario().concat(second.scenario())?;
    let split = first.scenario().num_parties();
    Ok(ProbBox::from_fn(scenario, |xs, a| {
        first.prob(&xs[..split], &a[..split]).clone() * second.prob(&xs[split..], &a[split..]).clone()
    }))
}

/// Relabels party `k`'s outputs through `merge[old] = new`. The image must be
/// exactly `0..m` for some `m >= 2`.
pub fn coarse_grain<T: Scalar>(b: &ProbBox<T>, k: usize, merge: &[usize]) -> Result<ProbBox<T>> {
    let s = b.scenario();
    if k >= s.num_parties() {
        return Err(Error::Wiring(format!("party {k} out of range")));
    }
    if merge.len() != s.outputs()[k] {
        return Err(Error::Wiring(format!(
            "merge map has {} entries, party {k} has {} outputs",
            merge.len(),
            s.outputs()[k]
        )));
    }
    let m = merge.iter().max().map_or(0, |&v| v + 1);
    if (0..m).any(|v| !merge.contains(&v)) {
        return Err(Error::Wiring(format!("merge map {merge:?} is not onto 0..{m}")));
    }
    let mut outputs = s.outputs().to_vec();
    outputs[k] = m;
    let scenario = Scenario::new(s.inputs().to_vec(), outputs)?;
    let mut table = vec![T::zero(); scenario.table_len()];
    for idx in 0..s.table_len() {
        let (xs, mut a) = s.table_tuple(idx);
        a[k] = merge[a[k]];
        let slot = scenario.table_index(&xs, &a);
        table[slot] = table[slot].clone() + b.table()[idx].clone();
    }
    ProbBox::new(scenario, table)
}

/// Measurement record leading to a leaf, and the leaf label.
type Path = (Vec<Assignment>, usize);

/// Adaptive measurement protocol of one effective party for one effective input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tree {
    /// Measure `party` with `input` and continue with the branch of its output.
    Measure { party: usize, input: usize, branches: Vec<Tree> },
    /// Announce an effective output.
    Leaf(usize),
}

impl Tree {
    pub fn measure(party: usize, input: usize, branches: Vec<Tree>) -> Self {
        Tree::Measure { party, input, branches }
    }

    /// Measures `party` and outputs its result directly.
    pub fn direct(party: usize, input: usize, outputs: usize) -> Self {
        Tree::measure(party, input, (0..outputs).map(Tree::Leaf).collect())
    }

    /// Root-to-leaf paths in depth-first order: the measurement record and
    /// the leaf label.
    fn paths(&self) -> Vec<Path> {
        fn walk(t: &Tree, prefix: &mut Vec<Assignment>, out: &mut Vec<Path>) {
            match t {
                Tree::Leaf(label) => out.push((prefix.clone(), *label)),
                Tree::Measure { party, input, branches } => {
                    for (o, child) in branches.iter().enumerate() {
                        prefix.push(Assignment::new(*party, *input, o));
                        walk(child, prefix, out);
                        prefix.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    fn check(&self, scenario: &Scenario, members: &[usize], seen: &mut Vec<usize>) -> Result<()> {
        match self {
            Tree::Leaf(_) => Ok(()),
            Tree::Measure { party, input, branches } => {
                if !members.contains(party) {
                    return Err(Error::Wiring(format!("party {party} is not in the group {members:?}")));
                }
                if seen.contains(party) {
                    return Err(Error::Wiring(format!("party {party} is measured twice on one path")));
                }
                if *input >= scenario.inputs()[*party] {
                    return Err(Error::Wiring(format!("party {party} has no input {input}")));
                }
                if branches.len() != scenario.outputs()[*party] {
                    return Err(Error::Wiring(format!(
                        "party {party} has {} outputs but the node has {} branches",
                        scenario.outputs()[*party],
                        branches.len()
                    )));
                }
                seen.push(*party);
                for b in branches {
                    b.check(scenario, members, seen)?;
                }
                seen.pop();
                Ok(())
            }
        }
    }
}

/// One effective party: its constituent parties and one protocol per effective input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub parties: Vec<usize>,
    pub trees: Vec<Tree>,
}

/// Grouping of parties into effective parties. With `fine_grained` the
/// effective output is the index of the leaf reached (the full transcript)
/// and the leaf labels are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WiringSpec {
    pub groups: Vec<Group>,
    #[serde(default)]
    pub fine_grained: bool,
}

impl WiringSpec {
    /// Every party is its own group and outputs what it measures.
    pub fn identity(scenario: &Scenario) -> Self {
        let groups = (0..scenario.num_parties())
            .map(|k| Group {
                parties: vec![k],
                trees: (0..scenario.inputs()[k]).map(|x| Tree::direct(k, x, scenario.outputs()[k])).collect(),
            })
            .collect();
        Self { groups, fine_grained: false }
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let n = scenario.num_parties();
        let mut owner = vec![None; n];
        for (g, group) in self.groups.iter().enumerate() {
            if group.trees.is_empty() {
                return Err(Error::Wiring(format!("group {g} has no inputs")));
            }
            for &k in &group.parties {
                if k >= n {
                    return Err(Error::Wiring(format!("party {k} out of range")));
                }
                if owner[k].replace(g).is_some() {
                    return Err(Error::Wiring(format!("party {k} is in two groups")));
                }
            }
            for t in &group.trees {
                t.check(scenario, &group.parties, &mut Vec::new())?;
            }
        }
        if let Some(k) = owner.iter().position(Option::is_none) {
            return Err(Error::Wiring(format!("party {k} is in no group")));
        }
        Ok(())
    }
}

/// Applies a wiring. The probability of an effective outcome is the sum, over
/// the leaves carrying it, of the probability of the measurement record that
/// leads there; unmeasured constituents are marginalized.
pub fn group_parties<T: Scalar>(b: &ProbBox<T>, spec: &WiringSpec) -> Result<ProbBox<T>> {
    let s = b.scenario();
    spec.validate(s)?;
    // paths[g][X] = list of (record, effective output)
    let paths: Vec<Vec<Vec<Path>>> = spec
        .groups
        .iter()
        .map(|g| {
            g.trees
                .iter()
                .map(|t| {
                    let mut p = t.paths();
                    if spec.fine_grained {
                        for (i, leaf) in p.iter_mut().enumerate() {
                            leaf.1 = i;
                        }
                    }
                    p
                })
                .collect()
        })
        .collect();
    let outputs: Vec<usize> =
        paths.iter().map(|g| g.iter().flatten().map(|p| p.1 + 1).max().unwrap_or(0).max(2)).collect();
    let inputs: Vec<usize> = spec.groups.iter().map(|g| g.trees.len()).collect();
    let scenario = Scenario::new(inputs, outputs)?;
    let mut table = vec![T::zero(); scenario.table_len()];
    for xs in scenario.input_tuples() {
        let chosen: Vec<&Vec<(Vec<Assignment>, usize)>> = xs.iter().enumerate().map(|(g, &x)| &paths[g][x]).collect();
        let radices: Vec<usize> = chosen.iter().map(|p| p.len()).collect();
        for pick in crate::scenario::TupleIter::new(radices) {
            let mut record = Vec::new();
            let mut out = Vec::with_capacity(pick.len());
            for (g, &i) in pick.iter().enumerate() {
                record.extend_from_slice(&chosen[g][i].0);
                out.push(chosen[g][i].1);
            }
            let p = b.marginal(&Event::new(record)?);
            let slot = scenario.table_index(&xs, &out);
            table[slot] = table[slot].clone() + p;
        }
    }
    ProbBox::new(scenario, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::pr_box_2222;
    use num_rational::Rational64;

    type Q = Rational64;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    #[test]
    fn post_selecting_pr_fixes_bob() {
        let pr = pr_box_2222::<Q>();
        let bob = post_select(&pr, 0, 0, 0).unwrap();
        for y in 0..2 {
            assert_eq!(*bob.prob(&[y], &[0]), q(1, 1));
            assert_eq!(*bob.prob(&[y], &[1]), q(0, 1));
        }
        let bob = post_select(&pr, 0, 1, 1).unwrap();
        assert_eq!(*bob.prob(&[1], &[0]), q(1, 1));
        assert_eq!(*bob.prob(&[0], &[1]), q(1, 1));
    }

    #[test]
    fn zero_probability_condition_is_an_error() {
        let d = ProbBox::<f64>::deterministic(Scenario::chsh(), &[vec![0, 0], vec![0, 0]]).unwrap();
        assert!(matches!(post_select(&d, 0, 0, 1), Err(Error::ZeroProbability(_))));
    }

    #[test]
    fn composition_multiplies() {
        let pr = pr_box_2222::<Q>();
        let pp = compose(&pr, &pr).unwrap();
        assert_eq!(pp.scenario().num_parties(), 4);
        assert!(pp.validate().is_valid());
        for k in 0..4 {
            for x in 0..2 {
                assert_eq!(pp.marginal(&Event::single(k, x, 1)), q(1, 2));
            }
        }
        assert_eq!(*pp.prob(&[1, 1, 0, 1], &[0, 1, 1, 1]), q(1, 4));
    }

    #[test]
    fn coarse_graining_adds_probabilities() {
        let s = Scenario::new(vec![2, 2], vec![3, 3]).unwrap();
        let d = ProbBox::<Q>::deterministic(s.clone(), &[vec![2, 1], vec![0, 2]]).unwrap();
        let b = d.mix(&ProbBox::uniform(s.clone()), q(2, 5)).unwrap();
        let c = coarse_grain(&b, 0, &[0, 1, 1]).unwrap();
        assert_eq!(c.scenario().outputs(), &[2, 3]);
        for xs in s.input_tuples() {
            for y in 0..3 {
                assert_eq!(*c.prob(&xs, &[1, y]), *b.prob(&xs, &[1, y]) + *b.prob(&xs, &[2, y]));
            }
        }
        assert_eq!(coarse_grain(&b, 1, &[0, 1, 2]).unwrap(), b);
        assert!(coarse_grain(&b, 1, &[0, 2, 2]).is_err());
        assert!(coarse_grain(&b, 1, &[0, 0, 0]).is_err());
    }

    #[test]
    fn identity_wiring_is_identity() {
        let pr = pr_box_2222::<Q>();
        assert_eq!(group_parties(&pr, &WiringSpec::identity(pr.scenario())).unwrap(), pr);
    }

    #[test]
    fn malformed_wirings_are_rejected() {
        let pr = pr_box_2222::<f64>();
        let twice = WiringSpec {
            groups: vec![
                Group {
                    parties: vec![0],
                    trees: vec![Tree::measure(0, 0, vec![Tree::direct(0, 1, 2), Tree::Leaf(0)])],
                },
                Group { parties: vec![1], trees: vec![Tree::direct(1, 0, 2)] },
            ],
            fine_grained: false,
        };
        assert!(group_parties(&pr, &twice).is_err());
        let dangling = WiringSpec {
            groups: vec![
                Group { parties: vec![0], trees: vec![Tree::measure(0, 0, vec![Tree::Leaf(0)])] },
                Group { parties: vec![1], trees: vec![Tree::direct(1, 0, 2)] },
            ],
            fine_grained: false,
        };
        assert!(group_parties(&pr, &dangling).is_err());
        let missing = WiringSpec {
            groups: vec![Group { parties: vec![0], trees: vec![Tree::direct(0, 0, 2)] }],
            fine_grained: false,
        };
        assert!(group_parties(&pr, &missing).is_err());
    }

    #[test]
    fn fine_grained_then_coarse_grained_matches_direct() {
        // Alice measures box-1 with x, feeds the result into box-2, outputs the XOR
        let pp = compose(&pr_box_2222::<Q>(), &pr_box_2222::<Q>()).unwrap();
        let xor_tree = |x: usize| {
            Tree::measure(
                0,
                x,
                vec![
                    Tree::measure(2, 0, vec![Tree::Leaf(0), Tree::Leaf(1)]),
                    Tree::measure(2, 1, vec![Tree::Leaf(1), Tree::Leaf(0)]),
                ],
            )
        };
        let bob_xor = |y: usize| {
            Tree::measure(1, y, vec![Tree::direct(3, y, 2), Tree::measure(3, y, vec![Tree::Leaf(1), Tree::Leaf(0)])])
        };
        let spec = WiringSpec {
            groups: vec![
                Group { parties: vec![0, 2], trees: vec![xor_tree(0), xor_tree(1)] },
                Group { parties: vec![1, 3], trees: vec![bob_xor(0), bob_xor(1)] },
            ],
            fine_grained: false,
        };
        let direct = group_parties(&pp, &spec).unwrap();
        assert!(direct.validate().is_valid());
        let fine = WiringSpec { fine_grained: true, ..spec };
        let fine_box = group_parties(&pp, &fine).unwrap();
        assert_eq!(fine_box.scenario().outputs(), &[4, 4]);
        // leaf order 00, 01, 10, 11 -> xor labels 0, 1, 1, 0
        let merged = coarse_grain(&coarse_grain(&fine_box, 0, &[0, 1, 1, 0]).unwrap(), 1, &[0, 1, 1, 0]).unwrap();
        assert_eq!(merged, direct);
    }

    #[test]
    fn post_selection_commutes_with_composition() {
        let a = ProbBox::<Q>::uniform(Scenario::chsh()).mix(&pr_box_2222(), q(1, 3)).unwrap();
        let b = ProbBox::<Q>::deterministic(Scenario::new(vec![2], vec![3]).unwrap(), &[vec![2, 0]]).unwrap();
        let left = post_select(&compose(&a, &b).unwrap(), 0, 1, 0).unwrap();
        let right = compose(&post_select(&a, 0, 1, 0).unwrap(), &b).unwrap();
        assert_eq!(left, right);
    }
}
