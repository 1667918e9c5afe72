//! Canonical renaming of variables.
//!
//! Set-level results (answer sets, sequence sets) are compared "modulo
//! renaming of local variables". To make that decidable each value is
//! lowered to a [`Node`] tree; the canonicalizer then renumbers variables
//! by first occurrence in a deterministic traversal. Unordered children
//! (multiset elements, store bindings) are ordered by an alpha-invariant
//! skeleton key, and groups the skeleton cannot distinguish are resolved
//! by trying every permutation and keeping the lexicographically least
//! token stream. Alpha-equivalent inputs therefore produce identical
//! outputs, and the output never depends on fresh-id allocation order.
//!
//! A set of "pinned" variables (typically the free variables of the goal
//! under study) can be exempted: pinned variables map to themselves, so
//! answers stay expressed in the goal's own variables.

use crate::terms::Var;
use std::collections::{BTreeMap, BTreeSet};

/// Structure tree handed to the canonicalizer.
#[derive(Clone, Debug)]
pub enum Node {
    Sym(&'static str),
    Str(String),
    Int(i64),
    Var(Var),
    Seq(Vec<Node>),
    /// Children whose order carries no meaning; the canonicalizer picks
    /// a canonical one.
    Unordered(Vec<Node>),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Tok {
    Open,
    Close,
    Sym(&'static str),
    Str(String),
    Int(i64),
    /// Pinned variable, identified by its (shared) id.
    Pinned(u64),
    /// Canonically numbered variable.
    Canon(u64),
}

/// Mapping from original variables to canonical ones. Pinned variables
/// map to themselves.
pub type VarMap = BTreeMap<Var, Var>;

pub fn rename_via(map: &VarMap, v: &Var) -> Var {
    map.get(v).cloned().unwrap_or_else(|| v.clone())
}

pub struct Canonicalizer {
    pinned: BTreeSet<Var>,
}

impl Default for Canonicalizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Canonicalizer {
    pub fn new() -> Self {
        Canonicalizer {
            pinned: BTreeSet::new(),
        }
    }

    pub fn with_pinned(pinned: BTreeSet<Var>) -> Self {
        Canonicalizer { pinned }
    }

    pub fn pinned(&self) -> &BTreeSet<Var> {
        &self.pinned
    }

    /// Computes the canonical renaming for all variables reachable in
    /// `node`. Canonical variables get ids above every pinned id and
    /// display names `V<k>` numbered after the pinned variables,
    /// skipping names a pinned variable already uses.
    pub fn compute_map(&self, node: &Node) -> VarMap {
        let mut search = Search {
            pinned: &self.pinned,
            best: None,
        };
        search.run(node);
        let order = match search.best {
            Some((_, order)) => order,
            None => Vec::new(),
        };

        let base_id = self.pinned.iter().map(|v| v.id + 1).max().unwrap_or(0);
        let taken: BTreeSet<&str> = self
            .pinned
            .iter()
            .filter_map(|v| v.name.as_deref())
            .collect();
        let mut map = VarMap::new();
        for v in &self.pinned {
            map.insert(v.clone(), v.clone());
        }
        let mut name_idx = self.pinned.len() as u64;
        for (k, old) in order.into_iter().enumerate() {
            let name = loop {
                let cand = format!("V{name_idx}");
                name_idx += 1;
                if !taken.contains(cand.as_str()) {
                    break cand;
                }
            };
            map.insert(old, Var::named(base_id + k as u64, &name));
        }
        map
    }
}

struct Search<'a> {
    pinned: &'a BTreeSet<Var>,
    best: Option<(Vec<Tok>, Vec<Var>)>,
}

static CLOSE_SENTINEL: Node = Node::Sym("\u{0}close");

fn is_close(node: &Node) -> bool {
    std::ptr::eq(node, &CLOSE_SENTINEL)
}

impl<'a> Search<'a> {
    fn run(&mut self, node: &Node) {
        let mut toks = Vec::new();
        let mut assigned: BTreeMap<u64, u64> = BTreeMap::new();
        let mut order: Vec<Var> = Vec::new();
        self.go(&[node], &mut toks, &mut assigned, &mut order);
    }

    fn go<'n>(
        &mut self,
        work: &[&'n Node],
        toks: &mut Vec<Tok>,
        assigned: &mut BTreeMap<u64, u64>,
        order: &mut Vec<Var>,
    ) {
        let Some((node, rest)) = work.split_first() else {
            if self
                .best
                .as_ref()
                .map(|(b, _)| toks.as_slice() < b.as_slice())
                .unwrap_or(true)
            {
                self.best = Some((toks.clone(), order.clone()));
            }
            return;
        };
        let toks_len = toks.len();
        let order_len = order.len();
        if is_close(node) {
            toks.push(Tok::Close);
            self.go(rest, toks, assigned, order);
            toks.truncate(toks_len);
            return;
        }
        match node {
            Node::Sym(s) => {
                toks.push(Tok::Sym(s));
                self.go(rest, toks, assigned, order);
            }
            Node::Str(s) => {
                toks.push(Tok::Str(s.clone()));
                self.go(rest, toks, assigned, order);
            }
            Node::Int(i) => {
                toks.push(Tok::Int(*i));
                self.go(rest, toks, assigned, order);
            }
            Node::Var(v) => {
                let mut new_assignment = None;
                if self.pinned.contains(v) {
                    toks.push(Tok::Pinned(v.id));
                } else if let Some(n) = assigned.get(&v.id) {
                    toks.push(Tok::Canon(*n));
                } else {
                    let n = assigned.len() as u64;
                    assigned.insert(v.id, n);
                    order.push(v.clone());
                    new_assignment = Some(v.id);
                    toks.push(Tok::Canon(n));
                }
                self.go(rest, toks, assigned, order);
                if let Some(id) = new_assignment {
                    assigned.remove(&id);
                }
            }
            Node::Seq(children) => {
                toks.push(Tok::Open);
                let mut inner: Vec<&'n Node> = children.iter().collect();
                inner.push(&CLOSE_SENTINEL);
                inner.extend_from_slice(rest);
                self.go(&inner, toks, assigned, order);
            }
            Node::Unordered(children) => {
                // Sort by alpha-invariant skeleton; permute tied runs.
                let mut keyed: Vec<(Vec<Tok>, &'n Node)> = children
                    .iter()
                    .map(|c| (skeleton(c, self.pinned), c))
                    .collect();
                keyed.sort_by(|a, b| a.0.cmp(&b.0));
                let mut groups: Vec<Vec<&'n Node>> = Vec::new();
                let mut keys: Vec<Vec<Tok>> = Vec::new();
                for (key, child) in keyed {
                    if keys.last().map(|k| *k == key).unwrap_or(false) {
                        groups.last_mut().unwrap().push(child);
                    } else {
                        keys.push(key);
                        groups.push(vec![child]);
                    }
                }
                self.permute_groups(&groups, 0, Vec::new(), rest, toks, assigned, order);
            }
        }
        toks.truncate(toks_len);
        order.truncate(order_len);
    }

    #[allow(clippy::too_many_arguments)]
    fn permute_groups<'n>(
        &mut self,
        groups: &[Vec<&'n Node>],
        gi: usize,
        prefix: Vec<&'n Node>,
        rest: &[&'n Node],
        toks: &mut Vec<Tok>,
        assigned: &mut BTreeMap<u64, u64>,
        order: &mut Vec<Var>,
    ) {
        if gi == groups.len() {
            let toks_len = toks.len();
            let order_len = order.len();
            toks.push(Tok::Open);
            let mut inner = prefix;
            inner.push(&CLOSE_SENTINEL);
            inner.extend_from_slice(rest);
            self.go(&inner, toks, assigned, order);
            toks.truncate(toks_len);
            order.truncate(order_len);
            return;
        }
        let group = &groups[gi];
        if group.len() == 1 {
            let mut prefix = prefix;
            prefix.push(group[0]);
            self.permute_groups(groups, gi + 1, prefix, rest, toks, assigned, order);
            return;
        }
        for perm in permutations(group.len()) {
            let mut prefix = prefix.clone();
            for &i in &perm {
                prefix.push(group[i]);
            }
            self.permute_groups(groups, gi + 1, prefix, rest, toks, assigned, order);
        }
    }
}

/// Alpha-invariant key: the token stream with every non-pinned variable
/// collapsed to the same token.
fn skeleton(node: &Node, pinned: &BTreeSet<Var>) -> Vec<Tok> {
    let mut out = Vec::new();
    fn walk(node: &Node, pinned: &BTreeSet<Var>, out: &mut Vec<Tok>) {
        match node {
            Node::Sym(s) => out.push(Tok::Sym(s)),
            Node::Str(s) => out.push(Tok::Str(s.clone())),
            Node::Int(i) => out.push(Tok::Int(*i)),
            Node::Var(v) => {
                if pinned.contains(v) {
                    out.push(Tok::Pinned(v.id));
                } else {
                    out.push(Tok::Canon(0));
                }
            }
            Node::Seq(children) => {
                out.push(Tok::Open);
                for c in children {
                    walk(c, pinned, out);
                }
                out.push(Tok::Close);
            }
            Node::Unordered(children) => {
                // Skeletons of unordered children are sorted so the key
                // itself does not depend on input order.
                out.push(Tok::Open);
                let mut keys: Vec<Vec<Tok>> =
                    children.iter().map(|c| skeleton(c, pinned)).collect();
                keys.sort();
                for k in keys {
                    out.extend(k);
                }
                out.push(Tok::Close);
            }
        }
    }
    walk(node, pinned, &mut out);
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    heap_permute(&mut idx, n, &mut out);
    out
}

fn heap_permute(idx: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(idx.clone());
        return;
    }
    for i in 0..k {
        heap_permute(idx, k - 1, out);
        if k % 2 == 0 {
            idx.swap(i, k - 1);
        } else {
            idx.swap(0, k - 1);
        }
    }
}

/// Values that can be canonicalized: lower to a [`Node`] and rebuild
/// under a variable renaming.
pub trait Canon: Sized {
    fn to_node(&self) -> Node;
    fn rename_vars(&self, map: &VarMap) -> Self;

    fn canonicalize_with(&self, canonicalizer: &Canonicalizer) -> Self {
        let map = canonicalizer.compute_map(&self.to_node());
        self.rename_vars(&map)
    }

    /// Full canonicalization: every variable renumbered by first
    /// occurrence in the canonical traversal.
    fn canonicalize(&self) -> Self {
        self.canonicalize_with(&Canonicalizer::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::{Term, UserAtom};
    use crate::terms::HasVars;

    fn v(id: u64) -> Var {
        Var::new(id)
    }

    impl Canon for Term {
        fn to_node(&self) -> Node {
            crate::canon::term_node(self)
        }
        fn rename_vars(&self, map: &VarMap) -> Self {
            crate::canon::rename_term(self, map)
        }
    }

    #[test]
    fn alpha_equivalent_terms_canonicalize_identically() {
        let a = Term::app("f", vec![Term::Var(v(10)), Term::Var(v(3))]);
        let b = Term::app("f", vec![Term::Var(v(7)), Term::Var(v(99))]);
        assert_eq!(a.canonicalize(), b.canonicalize());
    }

    #[test]
    fn correlation_preserved() {
        let a = Term::app("f", vec![Term::Var(v(5)), Term::Var(v(5))]);
        let b = Term::app("f", vec![Term::Var(v(1)), Term::Var(v(2))]);
        assert_ne!(a.canonicalize(), b.canonicalize());
    }

    #[test]
    fn canonicalize_idempotent() {
        let t = Term::app(
            "f",
            vec![
                Term::Var(v(42)),
                Term::app("g", vec![Term::Var(v(17)), Term::Var(v(42))]),
            ],
        );
        let once = t.canonicalize();
        assert_eq!(once.canonicalize(), once);
    }

    #[test]
    fn pinned_vars_survive() {
        let pin = Var::named(3, "U");
        let t = Term::app("f", vec![Term::Var(pin.clone()), Term::Var(v(50))]);
        let canon = t.canonicalize_with(&Canonicalizer::with_pinned(
            [pin.clone()].into_iter().collect(),
        ));
        match &canon {
            Term::App(_, args) => {
                assert_eq!(args[0], Term::Var(pin.clone()));
                // local got an id above the pinned one
                let fv = canon.free_vars();
                assert!(fv.iter().all(|w| w == &pin || w.id > pin.id));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unordered_symmetry_resolved() {
        // {p(A,B), p(B,C)} vs a renamed copy with scrambled ids must
        // canonicalize to the same multiset.
        let m1: crate::terms::AtomMultiset = [
            UserAtom::new("p", vec![Term::Var(v(1)), Term::Var(v(2))]),
            UserAtom::new("p", vec![Term::Var(v(2)), Term::Var(v(3))]),
        ]
        .into_iter()
        .collect();
        let m2: crate::terms::AtomMultiset = [
            UserAtom::new("p", vec![Term::Var(v(30)), Term::Var(v(10))]),
            UserAtom::new("p", vec![Term::Var(v(10)), Term::Var(v(20))]),
        ]
        .into_iter()
        .collect();
        let c = Canonicalizer::new();
        let n1 = c.compute_map(&crate::canon::atoms_node(&m1));
        let n2 = c.compute_map(&crate::canon::atoms_node(&m2));
        let r1: crate::terms::AtomMultiset =
            m1.iter().map(|a| crate::canon::rename_atom(a, &n1)).collect();
        let r2: crate::terms::AtomMultiset =
            m2.iter().map(|a| crate::canon::rename_atom(a, &n2)).collect();
        assert_eq!(r1, r2);
    }
}

// Node builders and renamers for the kernel types live here so every
// higher-level module can compose them.

use crate::terms::{AtomMultiset, Substitution, Term, UserAtom};

pub fn term_node(t: &Term) -> Node {
    match t {
        Term::Var(v) => Node::Var(v.clone()),
        Term::App(f, args) => {
            let mut children = vec![Node::Str(f.clone())];
            children.extend(args.iter().map(term_node));
            Node::Seq(children)
        }
    }
}

pub fn atom_node(a: &UserAtom) -> Node {
    let mut children = vec![Node::Str(a.predicate.clone())];
    children.extend(a.args.iter().map(term_node));
    children.push(Node::Int(a.index.map(|i| i as i64).unwrap_or(-1)));
    Node::Seq(children)
}

pub fn atoms_node(m: &AtomMultiset) -> Node {
    Node::Unordered(
        m.entries()
            .map(|(a, n)| Node::Seq(vec![Node::Int(n as i64), atom_node(a)]))
            .collect(),
    )
}

pub fn subst_node(s: &Substitution) -> Node {
    Node::Unordered(
        s.iter()
            .map(|(v, t)| Node::Seq(vec![Node::Var(v.clone()), term_node(t)]))
            .collect(),
    )
}

pub fn rename_term(t: &Term, map: &VarMap) -> Term {
    match t {
        Term::Var(v) => Term::Var(rename_via(map, v)),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| rename_term(a, map)).collect()),
    }
}

pub fn rename_atom(a: &UserAtom, map: &VarMap) -> UserAtom {
    UserAtom {
        predicate: a.predicate.clone(),
        args: a.args.iter().map(|t| rename_term(t, map)).collect(),
        index: a.index,
    }
}

pub fn rename_atoms(m: &AtomMultiset, map: &VarMap) -> AtomMultiset {
    m.iter().map(|a| rename_atom(a, map)).collect()
}

pub fn rename_subst(s: &Substitution, map: &VarMap) -> Substitution {
    Substitution::from_bindings(
        s.iter()
            .map(|(v, t)| (rename_via(map, v), rename_term(t, map)))
            .collect(),
    )
    .expect("renaming an idempotent substitution stays acyclic")
}
