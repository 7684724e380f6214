//! Scheduling structure of the delivery phase.
//!
//! Users are 0-based indices into `[K]`. A delivery walks every
//! `(t+α)`-subset `S` of users, and for each `S` every partition of `S` into
//! `δ` groups of `t+β` users. Within one partition the multicast streams are
//! the `(t+1)`-subsets lying inside a single group (the collection `Ω`).
//!
//! Each `(t+1)`-subset of `[K]` shows up `Γ` times over the full walk, so
//! every subfile is split into `Γ` mini-files and a [`FreshTracker`] hands out
//! the next unused one each time it is needed.

use std::collections::BTreeMap;

use num_integer::binomial;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted list of user indices.
pub type UserSet = Vec<usize>;

/// `C(n, k)`, zero when `k > n`.
pub fn choose(n: usize, k: usize) -> u128 {
    if k > n {
        0
    } else {
        binomial(n as u128, k as u128)
    }
}

pub fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Validated system and scheme parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulingParams {
    /// Users.
    pub k: usize,
    /// Transmit antennas.
    pub l: usize,
    /// Files in the library.
    pub n: usize,
    /// Cache size in files.
    pub m: usize,
    /// Aggregate cache ratio `K·M/N`.
    pub t: usize,
    pub alpha: usize,
    pub beta: usize,
    /// Groups per partition, `(t+α)/(t+β)`.
    pub delta: usize,
}

impl SchedulingParams {
    pub fn new(k: usize, l: usize, n: usize, m: usize, alpha: usize, beta: usize) -> Result<Self> {
        if k == 0 || l == 0 || n == 0 {
            return Err(Error::Parameter(format!(
                "K, L and N must be positive (K={k}, L={l}, N={n})"
            )));
        }
        if m > n {
            return Err(Error::CacheExceedsLibrary { m, n });
        }
        if !(k * m).is_multiple_of(n) {
            return Err(Error::NonIntegerCacheRatio { k, m, n });
        }
        let t = k * m / n;
        let max_alpha = l.min(k - t);
        if alpha < 1 || alpha > max_alpha {
            return Err(Error::AlphaOutOfRange {
                alpha,
                max: max_alpha,
            });
        }
        if beta < 1 || beta > alpha {
            return Err(Error::BetaOutOfRange { beta, alpha });
        }
        if !(t + alpha).is_multiple_of(t + beta) {
            return Err(Error::GroupSizeMismatch {
                subset: t + alpha,
                group: t + beta,
            });
        }
        Ok(Self {
            k,
            l,
            n,
            m,
            t,
            alpha,
            beta,
            delta: (t + alpha) / (t + beta),
        })
    }

    /// `|S| = t + α`.
    pub fn subset_size(&self) -> usize {
        self.t + self.alpha
    }

    /// `|P_i| = t + β`.
    pub fn group_size(&self) -> usize {
        self.t + self.beta
    }

    /// Number of subfiles per file, `C(K, t)`.
    pub fn subfiles(&self) -> u128 {
        choose(self.k, self.t)
    }

    pub fn gamma(&self) -> usize {
        gamma_count(self)
    }

    /// Mini-files per file, `C(K, t)·Γ`.
    pub fn minifiles(&self) -> u128 {
        self.subfiles() * self.gamma() as u128
    }

    pub fn partitions_per_subset(&self) -> u128 {
        partition_count(self.subset_size(), self.group_size())
    }

    /// Total transmissions over the delivery, one per `(S, P)` pair.
    pub fn transmissions(&self) -> u128 {
        choose(self.k, self.subset_size()) * self.partitions_per_subset()
    }

    /// Parallel streams each served user decodes, `C(t+β-1, t)`.
    pub fn streams_per_user(&self) -> usize {
        choose(self.group_size() - 1, self.t) as usize
    }

    /// Streams per transmission, `δ·C(t+β, t+1)`.
    pub fn streams_per_transmission(&self) -> usize {
        self.delta * choose(self.group_size(), self.t + 1) as usize
    }

    /// High-SNR slope `(t+α)/(K-t)` of the symmetric rate.
    pub fn dof(&self) -> f64 {
        (self.t + self.alpha) as f64 / (self.k - self.t) as f64
    }
}

/// Number of unordered partitions of `n` items into groups of `g`:
/// `n! / ((n/g)!·(g!)^(n/g))`.
pub fn partition_count(n: usize, g: usize) -> u128 {
    if g == 0 || !n.is_multiple_of(g) {
        return 0;
    }
    let groups = n / g;
    factorial(n) / (factorial(groups) * factorial(g).pow(groups as u32))
}

/// Mini-files per subfile:
/// `Γ = C(K-t-1, α-1)·(α-1)! / ((δ-1)!·(β-1)!·((t+β)!)^(δ-1))`.
pub fn gamma_count(p: &SchedulingParams) -> usize {
    let num = choose(p.k - p.t - 1, p.alpha - 1) * factorial(p.alpha - 1);
    let den = factorial(p.delta - 1)
        * factorial(p.beta - 1)
        * factorial(p.t + p.beta).pow((p.delta - 1) as u32);
    debug_assert_eq!(num % den, 0, "gamma must be integral for {p:?}");
    (num / den) as usize
}

/// All `size`-subsets of `items` in lexicographic order.
pub fn combinations(items: &[usize], size: usize) -> Vec<UserSet> {
    let n = items.len();
    if size > n {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(choose(n, size) as usize);
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // advance the rightmost index that can still move
        let Some(pos) = (0..size).rev().find(|&i| idx[i] != i + n - size) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// All `size`-subsets of `[K]`, lexicographically ordered.
pub fn enumerate_subsets(k: usize, size: usize) -> Result<Vec<UserSet>> {
    if size == 0 || size > k {
        return Err(Error::Parameter(format!(
            "subset size {size} must lie in 1..={k}"
        )));
    }
    let universe: Vec<usize> = (0..k).collect();
    Ok(combinations(&universe, size))
}

/// A split of a user subset into disjoint equal-size groups. Groups are
/// sorted internally and ordered by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub parent: UserSet,
    pub groups: Vec<UserSet>,
}

impl Partition {
    pub fn delta(&self) -> usize {
        self.groups.len()
    }
}

/// All unordered partitions of `s` into groups of `group_size`, in canonical
/// order: the group holding the smallest remaining user is chosen first, its
/// companions enumerated lexicographically.
pub fn enumerate_partitions(s: &[usize], group_size: usize) -> Result<Vec<Partition>> {
    if group_size == 0 || s.is_empty() || !s.len().is_multiple_of(group_size) {
        return Err(Error::Parameter(format!(
            "cannot split {} users into groups of {group_size}",
            s.len()
        )));
    }
    let mut parent = s.to_vec();
    parent.sort_unstable();
    parent.dedup();
    if parent.len() != s.len() {
        return Err(Error::Parameter("user subset has duplicates".into()));
    }

    fn recurse(rest: &[usize], g: usize, acc: &mut Vec<UserSet>, out: &mut Vec<Vec<UserSet>>) {
        let Some((&head, tail)) = rest.split_first() else {
            out.push(acc.clone());
            return;
        };
        for companions in combinations(tail, g - 1) {
            let mut group = Vec::with_capacity(g);
            group.push(head);
            group.extend_from_slice(&companions);
            let remaining: Vec<usize> = tail
                .iter()
                .copied()
                .filter(|u| !companions.contains(u))
                .collect();
            acc.push(group);
            recurse(&remaining, g, acc, out);
            acc.pop();
        }
    }

    let mut raw = Vec::new();
    recurse(&parent, group_size, &mut Vec::new(), &mut raw);
    Ok(raw
        .into_iter()
        .map(|groups| Partition {
            parent: parent.clone(),
            groups,
        })
        .collect())
}

/// Multicast stream collection of one transmission.
///
/// `omega` lists every target set `T`; `omega_k[i]` / `omega_bar_k[i]` hold
/// indices into `omega` of the streams desired / not desired by
/// `users[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaSets {
    pub users: UserSet,
    pub omega: Vec<UserSet>,
    pub omega_k: Vec<Vec<usize>>,
    pub omega_bar_k: Vec<Vec<usize>>,
}

impl OmegaSets {
    /// Builds the per-user views for an arbitrary stream collection over the
    /// served users.
    pub fn from_streams(users: &[usize], omega: Vec<UserSet>) -> Result<Self> {
        let mut users = users.to_vec();
        users.sort_unstable();
        for target in &omega {
            if target.is_empty() || target.iter().any(|u| users.binary_search(u).is_err()) {
                return Err(Error::Parameter(format!(
                    "stream target {target:?} not contained in served users {users:?}"
                )));
            }
        }
        let omega_k = users
            .iter()
            .map(|u| (0..omega.len()).filter(|&j| omega[j].contains(u)).collect())
            .collect();
        let omega_bar_k = users
            .iter()
            .map(|u| (0..omega.len()).filter(|&j| !omega[j].contains(u)).collect())
            .collect();
        Ok(Self {
            users,
            omega,
            omega_k,
            omega_bar_k,
        })
    }

    /// Position of `user` in `users`.
    pub fn position(&self, user: usize) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn streams(&self) -> usize {
        self.omega.len()
    }
}

/// Multicast targets of one partition: every `(t+1)`-subset inside a group.
pub fn build_omega(p: &Partition, t: usize) -> Result<OmegaSets> {
    let mut omega = Vec::new();
    for group in &p.groups {
        if group.len() < t + 1 {
            return Err(Error::Parameter(format!(
                "group {group:?} smaller than multicast size {}",
                t + 1
            )));
        }
        omega.extend(combinations(group, t + 1));
    }
    OmegaSets::from_streams(&p.parent, omega)
}

/// One `(S, P)` step of the delivery walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleSlot {
    pub subset: UserSet,
    pub partition: Partition,
    pub omega: OmegaSets,
}

/// Materializes the full delivery walk in deterministic order.
pub fn walk_schedule(p: &SchedulingParams) -> Result<Vec<ScheduleSlot>> {
    let mut slots = Vec::with_capacity(p.transmissions() as usize);
    for subset in enumerate_subsets(p.k, p.subset_size())? {
        for partition in enumerate_partitions(&subset, p.group_size())? {
            let omega = build_omega(&partition, p.t)?;
            slots.push(ScheduleSlot {
                subset: subset.clone(),
                partition,
                omega,
            });
        }
    }
    Ok(slots)
}

/// State of the NEW operator: for each needed subfile, the next unused
/// mini-file.
///
/// Counters are keyed by the requesting user as well as `(file, τ)`, so two
/// users demanding the same file each receive their own full set of
/// mini-files. With distinct demands the user is implied by the file.
#[derive(Clone, Debug)]
pub struct FreshTracker {
    gamma: usize,
    counters: BTreeMap<(usize, usize, UserSet), usize>,
}

impl FreshTracker {
    pub fn new(gamma: usize) -> Self {
        Self {
            gamma,
            counters: BTreeMap::new(),
        }
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    /// Returns the next fresh mini-file index (1-based, `1..=Γ`) of subfile
    /// `W_{file, tau}` for `user`.
    pub fn fresh_index(&mut self, user: usize, file: usize, tau: &[usize]) -> Result<usize> {
        let counter = self.counters.entry((user, file, tau.to_vec())).or_insert(0);
        if *counter >= self.gamma {
            return Err(Error::FreshExhausted {
                user,
                file,
                tau: tau.to_vec(),
                gamma: self.gamma,
            });
        }
        *counter += 1;
        Ok(*counter)
    }

    /// How many mini-files have been issued for the key.
    pub fn issued(&self, user: usize, file: usize, tau: &[usize]) -> usize {
        self.counters
            .get(&(user, file, tau.to_vec()))
            .copied()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize, UserSet), &usize)> {
        self.counters.iter()
    }
}
