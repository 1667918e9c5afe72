//! First-order terms, variables, substitutions and atom multisets.
//!
//! Every other module builds on these types. Values are immutable after
//! construction; the only mutable object is the fresh-variable supply,
//! which hands out ids through an atomic counter so enumeration branches
//! can run in parallel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// A logic variable: a globally unique id plus an optional display name.
///
/// Equality, ordering and hashing look at the id only; the name is kept
/// for printing parsed goals and programs.
#[derive(Clone, Debug)]
pub struct Var {
    pub id: u64,
    pub name: Option<Arc<str>>,
}

impl Var {
    pub fn new(id: u64) -> Self {
        Var { id, name: None }
    }

    pub fn named(id: u64, name: &str) -> Self {
        Var {
            id,
            name: Some(Arc::from(name)),
        }
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Var {}
impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Var {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.id.cmp(&other.id)
    }
}
impl std::hash::Hash for Var {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "_{}", self.id),
        }
    }
}

/// A first-order term: a variable or a compound `f(t1,...,tn)` (n >= 0).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Var),
    App(String, Vec<Term>),
}

impl Term {
    pub fn var(v: Var) -> Self {
        Term::Var(v)
    }

    pub fn app(functor: impl Into<String>, args: Vec<Term>) -> Self {
        Term::App(functor.into(), args)
    }

    pub fn constant(functor: impl Into<String>) -> Self {
        Term::App(functor.into(), Vec::new())
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn contains_var(&self, v: &Var) -> bool {
        match self {
            Term::Var(w) => w == v,
            Term::App(_, args) => args.iter().any(|t| t.contains_var(v)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::App(name, args) => {
                write!(f, "{name}")?;
                if !args.is_empty() {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

/// A user-defined (CHR) constraint atom. The index is used by the
/// trace engine to record the derivation step that introduced the atom;
/// abstract sequences carry atoms with the index stripped.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UserAtom {
    pub predicate: String,
    pub args: Vec<Term>,
    pub index: Option<u32>,
}

impl UserAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        UserAtom {
            predicate: predicate.into(),
            args,
            index: None,
        }
    }

    pub fn indexed(mut self, index: u32) -> Self {
        self.index = Some(index);
        self
    }

    pub fn strip_index(&self) -> UserAtom {
        UserAtom {
            predicate: self.predicate.clone(),
            args: self.args.clone(),
            index: None,
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

// Ordering groups atoms by predicate and arguments first, index last,
// so an index-blind difference removes the lowest-indexed occurrence.
impl PartialOrd for UserAtom {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for UserAtom {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.predicate
            .cmp(&other.predicate)
            .then_with(|| self.args.cmp(&other.args))
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl fmt::Display for UserAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Term::App(self.predicate.clone(), self.args.clone()))?;
        if let Some(i) = self.index {
            write!(f, "#{i}")?;
        }
        Ok(())
    }
}

/// A generic multiset kept as a sorted association list element -> count.
/// Equality is structural, iteration order deterministic.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multiset<T: Ord + Clone> {
    items: Vec<(T, u32)>,
}

impl<T: Ord + Clone> Default for Multiset<T> {
    fn default() -> Self {
        Multiset { items: Vec::new() }
    }
}

impl<T: Ord + Clone> Multiset<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(item: T) -> Self {
        Multiset {
            items: vec![(item, 1)],
        }
    }

    pub fn insert(&mut self, item: T) {
        match self.items.binary_search_by(|(x, _)| x.cmp(&item)) {
            Ok(i) => self.items[i].1 += 1,
            Err(i) => self.items.insert(i, (item, 1)),
        }
    }

    pub fn remove_one(&mut self, item: &T) -> bool {
        match self.items.binary_search_by(|(x, _)| x.cmp(item)) {
            Ok(i) => {
                if self.items[i].1 > 1 {
                    self.items[i].1 -= 1;
                } else {
                    self.items.remove(i);
                }
                true
            }
            Err(_) => false,
        }
    }

    pub fn count(&self, item: &T) -> u32 {
        match self.items.binary_search_by(|(x, _)| x.cmp(item)) {
            Ok(i) => self.items[i].1,
            Err(_) => 0,
        }
    }

    pub fn contains(&self, item: &T) -> bool {
        self.count(item) > 0
    }

    /// Multiset union: adds multiplicities.
    pub fn union(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (item, n) in &other.items {
            match out.items.binary_search_by(|(x, _)| x.cmp(item)) {
                Ok(i) => out.items[i].1 += n,
                Err(i) => out.items.insert(i, (item.clone(), *n)),
            }
        }
        out
    }

    /// Multiset difference, saturating at zero.
    pub fn difference(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (item, n) in &other.items {
            if let Ok(i) = out.items.binary_search_by(|(x, _)| x.cmp(item)) {
                if out.items[i].1 > *n {
                    out.items[i].1 -= n;
                } else {
                    out.items.remove(i);
                }
            }
        }
        out
    }

    /// True iff every element of `self` occurs in `other` with at least
    /// the same multiplicity.
    pub fn is_subset(&self, other: &Self) -> bool {
        self.items.iter().all(|(x, n)| other.count(x) >= *n)
    }

    /// Multiset intersection: pointwise minimum of multiplicities.
    pub fn intersection(&self, other: &Self) -> Self {
        let mut items = Vec::new();
        for (x, n) in &self.items {
            let m = other.count(x).min(*n);
            if m > 0 {
                items.push((x.clone(), m));
            }
        }
        Multiset { items }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of elements counted with multiplicity.
    pub fn len(&self) -> usize {
        self.items.iter().map(|(_, n)| *n as usize).sum()
    }

    /// Iterates every occurrence, expanding multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items
            .iter()
            .flat_map(|(x, n)| std::iter::repeat(x).take(*n as usize))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&T, u32)> {
        self.items.iter().map(|(x, n)| (x, *n))
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.iter().cloned().collect()
    }
}

impl<T: Ord + Clone> FromIterator<T> for Multiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut out = Multiset::new();
        for item in iter {
            out.insert(item);
        }
        out
    }
}

/// Multiset of user atoms; the workhorse for rule heads, CHR stores,
/// assumptions and stable-atom multisets.
pub type AtomMultiset = Multiset<UserAtom>;

/// Multiset difference on atom multisets. With `respect_index` set, two
/// atoms match only when predicate, arguments and index all agree;
/// otherwise indexes are ignored and the lowest-indexed occurrence is
/// removed first (element order is canonical, so this is deterministic).
pub fn mdiff(a: &AtomMultiset, b: &AtomMultiset, respect_index: bool) -> AtomMultiset {
    if respect_index {
        return a.difference(b);
    }
    let mut out: Vec<(UserAtom, u32)> = a.entries().map(|(x, n)| (x.clone(), n)).collect();
    for victim in b.iter() {
        let stripped = victim.strip_index();
        if let Some(i) = out
            .iter()
            .position(|(x, n)| *n > 0 && x.strip_index() == stripped)
        {
            out[i].1 -= 1;
        }
    }
    out.into_iter()
        .filter(|(_, n)| *n > 0)
        .flat_map(|(x, n)| std::iter::repeat(x).take(n as usize))
        .collect()
}

/// An idempotent substitution: a finite map from variables to terms.
/// No variable maps to itself, and no bound variable occurs in any
/// right-hand side.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Substitution {
    map: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn domain(&self) -> BTreeSet<Var> {
        self.map.keys().cloned().collect()
    }

    /// Builds an idempotent substitution from raw bindings by closing
    /// under self-application. Bindings of a variable to itself are
    /// dropped. Returns `None` when the bindings are cyclic.
    pub fn from_bindings(bindings: Vec<(Var, Term)>) -> Option<Self> {
        let mut map: BTreeMap<Var, Term> = BTreeMap::new();
        for (v, t) in bindings {
            if Term::Var(v.clone()) == t {
                continue;
            }
            map.insert(v, t);
        }
        // Close under self-application; a cycle makes this diverge, so
        // bail out after |map| rounds and check for leftovers.
        let mut changed = true;
        let mut rounds = 0usize;
        while changed {
            changed = false;
            rounds += 1;
            if rounds > map.len() + 1 {
                return None;
            }
            let snapshot = Substitution { map: map.clone() };
            for (v, t) in map.iter_mut() {
                let nt = snapshot.apply(t);
                if nt.contains_var(v) {
                    return None;
                }
                if nt != *t {
                    *t = nt;
                    changed = true;
                }
            }
        }
        map.retain(|v, t| Term::Var(v.clone()) != *t);
        Some(Substitution { map })
    }

    pub fn apply(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => match self.map.get(v) {
                Some(bound) => bound.clone(),
                None => t.clone(),
            },
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| self.apply(a)).collect())
            }
        }
    }

    pub fn apply_atom(&self, a: &UserAtom) -> UserAtom {
        UserAtom {
            predicate: a.predicate.clone(),
            args: a.args.iter().map(|t| self.apply(t)).collect(),
            index: a.index,
        }
    }
}

/// Applies a substitution to a term; free function mirror of
/// [`Substitution::apply`].
pub fn apply(s: &Substitution, t: &Term) -> Term {
    s.apply(t)
}

/// Thread-safe source of fresh variable ids. The base offset comes from
/// the `--seed` flag so runs are reproducible.
#[derive(Debug)]
pub struct VarSupply {
    next: AtomicU64,
}

impl VarSupply {
    pub fn new(base: u64) -> Self {
        VarSupply {
            next: AtomicU64::new(base),
        }
    }

    pub fn fresh(&self) -> Var {
        Var::new(self.next.fetch_add(1, Ordering::Relaxed))
    }

    /// Highest id handed out so far (exclusive).
    pub fn watermark(&self) -> u64 {
        self.next.load(Ordering::Relaxed)
    }
}

/// Values which contain variables.
pub trait HasVars {
    fn collect_vars(&self, out: &mut BTreeSet<Var>);

    fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }
}

/// Exact set of variable ids occurring free in a value.
pub fn free_vars<T: HasVars + ?Sized>(x: &T) -> BTreeSet<Var> {
    x.free_vars()
}

impl HasVars for Term {
    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::App(_, args) => {
                for a in args {
                    a.collect_vars(out);
                }
            }
        }
    }
}

impl HasVars for UserAtom {
    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        for a in &self.args {
            a.collect_vars(out);
        }
    }
}

impl<T: HasVars + Ord + Clone> HasVars for Multiset<T> {
    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        for (x, _) in self.items.iter() {
            x.collect_vars(out);
        }
    }
}

impl<T: HasVars> HasVars for Vec<T> {
    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        for x in self {
            x.collect_vars(out);
        }
    }
}

impl<T: HasVars> HasVars for [T] {
    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        for x in self {
            x.collect_vars(out);
        }
    }
}

impl HasVars for Substitution {
    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        for (v, t) in self.map.iter() {
            out.insert(v.clone());
            t.collect_vars(out);
        }
    }
}

/// Renames every variable of a value apart, using fresh ids from the
/// supply. The mapping is shared across the whole value so repeated
/// occurrences stay identified; display names are dropped because a
/// renamed variable no longer corresponds to a source-text occurrence.
pub struct Renamer<'a> {
    supply: &'a VarSupply,
    map: BTreeMap<Var, Var>,
}

impl<'a> Renamer<'a> {
    pub fn new(supply: &'a VarSupply) -> Self {
        Renamer {
            supply,
            map: BTreeMap::new(),
        }
    }

    pub fn rename_var(&mut self, v: &Var) -> Var {
        if let Some(w) = self.map.get(v) {
            return w.clone();
        }
        let w = self.supply.fresh();
        self.map.insert(v.clone(), w.clone());
        w
    }

    pub fn rename_term(&mut self, t: &Term) -> Term {
        match t {
            Term::Var(v) => Term::Var(self.rename_var(v)),
            Term::App(f, args) => Term::App(
                f.clone(),
                args.iter().map(|a| self.rename_term(a)).collect(),
            ),
        }
    }

    pub fn rename_atom(&mut self, a: &UserAtom) -> UserAtom {
        UserAtom {
            predicate: a.predicate.clone(),
            args: a.args.iter().map(|t| self.rename_term(t)).collect(),
            index: a.index,
        }
    }
}

/// Renames a sequence of atoms apart with one shared mapping.
pub fn rename_apart_atoms(atoms: &[UserAtom], supply: &VarSupply) -> Vec<UserAtom> {
    let mut r = Renamer::new(supply);
    atoms.iter().map(|a| r.rename_atom(a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(id: u64) -> Var {
        Var::new(id)
    }

    fn tvar(id: u64) -> Term {
        Term::Var(v(id))
    }

    #[test]
    fn apply_single_binding() {
        // {X -> a} applied to f(X,Y) gives f(a,Y)
        let s = Substitution::from_bindings(vec![(v(0), Term::constant("a"))]).unwrap();
        let t = Term::app("f", vec![tvar(0), tvar(1)]);
        assert_eq!(
            s.apply(&t),
            Term::app("f", vec![Term::constant("a"), tvar(1)])
        );
    }

    #[test]
    fn apply_identity() {
        let s = Substitution::new();
        let t = Term::app("f", vec![tvar(0)]);
        assert_eq!(s.apply(&t), t);
    }

    #[test]
    fn idempotent_closure() {
        // {X -> g(Y), Y -> b} normalizes so X -> g(b); frozen by hand:
        // applying Y -> b inside X's binding closes the chain.
        let s = Substitution::from_bindings(vec![
            (v(0), Term::app("g", vec![tvar(1)])),
            (v(1), Term::constant("b")),
        ])
        .unwrap();
        assert_eq!(
            s.apply(&tvar(0)),
            Term::app("g", vec![Term::constant("b")])
        );
        // idempotent: applying twice equals applying once
        let once = s.apply(&tvar(0));
        assert_eq!(s.apply(&once), once);
    }

    #[test]
    fn cyclic_bindings_rejected() {
        assert!(Substitution::from_bindings(vec![(v(0), Term::app("f", vec![tvar(0)]))]).is_none());
        assert!(Substitution::from_bindings(vec![
            (v(0), Term::app("f", vec![tvar(1)])),
            (v(1), Term::app("g", vec![tvar(0)])),
        ])
        .is_none());
    }

    #[test]
    fn self_binding_dropped() {
        let s = Substitution::from_bindings(vec![(v(0), tvar(0))]).unwrap();
        assert!(s.is_empty());
    }

    fn atom(p: &str) -> UserAtom {
        UserAtom::new(p, vec![])
    }

    #[test]
    fn mdiff_multiplicity() {
        let a: AtomMultiset = [atom("g"), atom("g"), atom("h")].into_iter().collect();
        let b = AtomMultiset::singleton(atom("g"));
        let expect: AtomMultiset = [atom("g"), atom("h")].into_iter().collect();
        assert_eq!(mdiff(&a, &b, false), expect);
    }

    #[test]
    fn mdiff_respects_indexes() {
        // {g^1, g^2} \ {g^2} with indexes leaves {g^1}
        let a: AtomMultiset = [atom("g").indexed(1), atom("g").indexed(2)]
            .into_iter()
            .collect();
        let b = AtomMultiset::singleton(atom("g").indexed(2));
        let expect = AtomMultiset::singleton(atom("g").indexed(1));
        assert_eq!(mdiff(&a, &b, true), expect);
    }

    #[test]
    fn mdiff_disjoint() {
        let a = AtomMultiset::singleton(atom("g"));
        let b = AtomMultiset::singleton(atom("h"));
        assert_eq!(mdiff(&a, &b, false), a);
    }

    #[test]
    fn free_vars_examples() {
        let t = Term::app("f", vec![tvar(0), Term::app("g", vec![tvar(1)])]);
        let fv = free_vars(&t);
        assert_eq!(fv, [v(0), v(1)].into_iter().collect());

        let ground = UserAtom::new("p", vec![Term::constant("a")]);
        assert!(free_vars(&ground).is_empty());
    }

    #[test]
    fn rename_apart_fresh_and_consistent() {
        let supply = VarSupply::new(100);
        let atoms = vec![
            UserAtom::new("g", vec![tvar(0)]),
            UserAtom::new("h", vec![tvar(0), tvar(1)]),
        ];
        let renamed = rename_apart_atoms(&atoms, &supply);
        // structure preserved, shared variable stays shared
        assert_eq!(renamed[0].args[0], renamed[1].args[0]);
        assert_ne!(renamed[0].args[0], tvar(0));
        // two successive renamings share no variables
        let renamed2 = rename_apart_atoms(&atoms, &supply);
        let fv1 = free_vars(&renamed);
        let fv2 = free_vars(&renamed2);
        assert!(fv1.is_disjoint(&fv2));
    }

    #[test]
    fn multiset_union_difference_roundtrip() {
        let a: AtomMultiset = [atom("g"), atom("h")].into_iter().collect();
        let b: AtomMultiset = [atom("g"), atom("g")].into_iter().collect();
        assert_eq!(a.union(&b).difference(&b), a);
    }
}
