//! Cache placement, XOR message construction and bit-exact decoding.
//!
//! Every file is cut into `C(K, t)` subfiles, one per `t`-subset `τ` of users
//! (lexicographic order), and each subfile into `Γ` mini-files. Mini-files are
//! contiguous bit slices, so mini-file `j` of subfile `τ` occupies bits
//! `[(pos(τ)·Γ + j − 1)·b, (pos(τ)·Γ + j)·b)` with `b = F / (C(K,t)·Γ)`.

use std::collections::BTreeMap;
use std::io::Write;

use bitvec::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    combinations, walk_schedule, FreshTracker, OmegaSets, Partition, SchedulingParams, UserSet,
};
use crate::error::{Error, Result};

pub type Bits = BitVec<u8, Msb0>;

/// The file library, `N` equal-length files of `F` bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Library {
    files: Vec<Bits>,
}

impl Library {
    pub fn new(files: Vec<Vec<u8>>) -> Result<Self> {
        let Some(first) = files.first() else {
            return Err(Error::Parameter("library must hold at least one file".into()));
        };
        let len = first.len();
        if files.iter().any(|f| f.len() != len) {
            return Err(Error::Parameter("library files differ in length".into()));
        }
        Ok(Self {
            files: files.into_iter().map(Bits::from_vec).collect(),
        })
    }

    /// `n` files of uniformly random bytes.
    pub fn random<G: Rng + ?Sized>(n: usize, bytes: usize, rng: &mut G) -> Result<Self> {
        let files = (0..n)
            .map(|_| {
                let mut f = vec![0u8; bytes];
                rng.fill(f.as_mut_slice());
                f
            })
            .collect();
        Self::new(files)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// File size `F` in bits.
    pub fn bits(&self) -> usize {
        self.files[0].len()
    }

    pub fn file(&self, n: usize) -> &BitSlice<u8, Msb0> {
        &self.files[n]
    }
}

/// Identifies mini-file `W^index_{file, tau}` (`index` is 1-based).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MiniFileId {
    pub file: usize,
    pub tau: UserSet,
    pub index: usize,
}

/// How files are cut into subfiles and mini-files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheLayout {
    pub k: usize,
    pub t: usize,
    pub gamma: usize,
    /// All `t`-subsets in lexicographic order.
    pub subfiles: Vec<UserSet>,
    /// Mini-file size in bits.
    pub mini_bits: usize,
}

impl CacheLayout {
    pub fn new(k: usize, t: usize, gamma: usize, file_bits: usize) -> Result<Self> {
        if t > k || gamma == 0 {
            return Err(Error::Parameter(format!(
                "invalid layout K={k}, t={t}, gamma={gamma}"
            )));
        }
        let universe: Vec<usize> = (0..k).collect();
        let subfiles = combinations(&universe, t);
        let parts = subfiles.len() * gamma;
        if file_bits == 0 || !file_bits.is_multiple_of(parts) {
            return Err(Error::IndivisibleFile {
                bits: file_bits,
                parts,
            });
        }
        Ok(Self {
            k,
            t,
            gamma,
            subfiles,
            mini_bits: file_bits / parts,
        })
    }

    pub fn from_params(p: &SchedulingParams, file_bits: usize) -> Result<Self> {
        Self::new(p.k, p.t, p.gamma(), file_bits)
    }

    /// Smallest file size (in bytes) with one-byte mini-files.
    pub fn min_file_bytes(p: &SchedulingParams) -> usize {
        p.subfiles() as usize * p.gamma()
    }

    fn subfile_pos(&self, tau: &[usize]) -> Option<usize> {
        self.subfiles.binary_search_by(|s| s.as_slice().cmp(tau)).ok()
    }

    /// Bit range of a mini-file inside its file.
    pub fn range(&self, tau: &[usize], index: usize) -> Option<std::ops::Range<usize>> {
        if index == 0 || index > self.gamma {
            return None;
        }
        let pos = self.subfile_pos(tau)?;
        let start = (pos * self.gamma + index - 1) * self.mini_bits;
        Some(start..start + self.mini_bits)
    }

    fn subfile_range(&self, tau: &[usize]) -> Option<std::ops::Range<usize>> {
        let pos = self.subfile_pos(tau)?;
        let len = self.gamma * self.mini_bits;
        Some(pos * len..(pos + 1) * len)
    }

    pub fn minifile<'a>(&self, lib: &'a Library, id: &MiniFileId) -> Option<&'a BitSlice<u8, Msb0>> {
        let r = self.range(&id.tau, id.index)?;
        lib.files.get(id.file).map(|f| &f[r])
    }
}

/// Cache of one user: every subfile `W_{n,τ}` with the user in `τ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheContents {
    pub user: usize,
    subfiles: BTreeMap<(usize, UserSet), Bits>,
    gamma: usize,
    mini_bits: usize,
}

impl CacheContents {
    pub fn holds(&self, file: usize, tau: &[usize]) -> bool {
        self.subfiles.contains_key(&(file, tau.to_vec()))
    }

    pub fn minifile(&self, id: &MiniFileId) -> Option<&BitSlice<u8, Msb0>> {
        if id.index == 0 || id.index > self.gamma {
            return None;
        }
        let sub = self.subfiles.get(&(id.file, id.tau.clone()))?;
        let start = (id.index - 1) * self.mini_bits;
        Some(&sub[start..start + self.mini_bits])
    }

    pub fn cached_bits(&self) -> usize {
        self.subfiles.values().map(|b| b.len()).sum()
    }

    pub fn minifile_count(&self) -> usize {
        self.subfiles.len() * self.gamma
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, UserSet), &Bits)> {
        self.subfiles.iter()
    }
}

/// Fills every user's cache according to the layout.
pub fn place_cache(lib: &Library, layout: &CacheLayout) -> Result<Vec<CacheContents>> {
    let parts = layout.subfiles.len() * layout.gamma;
    if lib.bits() != parts * layout.mini_bits {
        return Err(Error::IndivisibleFile {
            bits: lib.bits(),
            parts,
        });
    }
    Ok((0..layout.k)
        .map(|user| {
            let mut subfiles = BTreeMap::new();
            for tau in layout.subfiles.iter().filter(|tau| tau.contains(&user)) {
                let r = layout.subfile_range(tau).expect("tau from layout");
                for n in 0..lib.len() {
                    subfiles.insert((n, tau.clone()), lib.file(n)[r.clone()].to_bitvec());
                }
            }
            CacheContents {
                user,
                subfiles,
                gamma: layout.gamma,
                mini_bits: layout.mini_bits,
            }
        })
        .collect())
}

/// XOR multicast message `X_T`. `provenance[i]` is the mini-file intended
/// for `target[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CodedMessage {
    pub target: UserSet,
    #[serde(skip)]
    pub payload: Bits,
    pub provenance: Vec<MiniFileId>,
}

/// `X_T = ⊕_{k∈T} NEW(W_{d_k, T∖{k}})`.
pub fn build_coded_message(
    demands: &[usize],
    target: &[usize],
    tracker: &mut FreshTracker,
    lib: &Library,
    layout: &CacheLayout,
) -> Result<CodedMessage> {
    if target.len() != layout.t + 1 {
        return Err(Error::Parameter(format!(
            "multicast target {target:?} must contain t+1={} users",
            layout.t + 1
        )));
    }
    let mut payload = bitvec![u8, Msb0; 0; layout.mini_bits];
    let mut provenance = Vec::with_capacity(target.len());
    for &k in target {
        let file = *demands.get(k).ok_or_else(|| {
            Error::Parameter(format!("no demand for user {k}"))
        })?;
        let tau: UserSet = target.iter().copied().filter(|&u| u != k).collect();
        let index = tracker.fresh_index(k, file, &tau)?;
        let id = MiniFileId { file, tau, index };
        let bits = layout
            .minifile(lib, &id)
            .ok_or_else(|| Error::Parameter(format!("mini-file {id:?} out of range")))?;
        payload ^= bits;
        provenance.push(id);
    }
    Ok(CodedMessage {
        target: target.to_vec(),
        payload,
        provenance,
    })
}

/// One `(S, P)` transmission. `messages[i]` is sent on stream `omega.omega[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transmission {
    pub subset: UserSet,
    pub partition: Partition,
    #[serde(skip)]
    pub omega: OmegaSets,
    pub messages: Vec<CodedMessage>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeliverySchedule {
    pub layout: CacheLayout,
    pub demands: Vec<usize>,
    pub transmissions: Vec<Transmission>,
}

impl DeliverySchedule {
    pub fn message_count(&self) -> usize {
        self.transmissions.iter().map(|t| t.messages.len()).sum()
    }

    /// Bits delivered summed over recipients, `Σ_X |X|·|T|`.
    pub fn delivered_bits(&self) -> usize {
        self.transmissions
            .iter()
            .flat_map(|t| &t.messages)
            .map(|m| m.payload.len() * m.target.len())
            .sum()
    }

    /// Writes one JSON object per transmission (users 0-based).
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for tx in &self.transmissions {
            serde_json::to_writer(&mut out, tx)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Walks the full delivery and builds every coded message.
pub fn run_delivery(
    demands: &[usize],
    params: &SchedulingParams,
    lib: &Library,
) -> Result<DeliverySchedule> {
    if demands.len() != params.k {
        return Err(Error::DimensionMismatch {
            expected: params.k,
            found: demands.len(),
        });
    }
    if lib.len() != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            found: lib.len(),
        });
    }
    if let Some(&d) = demands.iter().find(|&&d| d >= params.n) {
        return Err(Error::Parameter(format!(
            "demand {d} outside library of {} files",
            params.n
        )));
    }
    let layout = CacheLayout::from_params(params, lib.bits())?;
    let mut tracker = FreshTracker::new(layout.gamma);
    let mut transmissions = Vec::with_capacity(params.transmissions() as usize);
    for slot in walk_schedule(params)? {
        let messages = slot
            .omega
            .omega
            .iter()
            .map(|target| build_coded_message(demands, target, &mut tracker, lib, &layout))
            .collect::<Result<Vec<_>>>()?;
        transmissions.push(Transmission {
            subset: slot.subset,
            partition: slot.partition,
            omega: slot.omega,
            messages,
        });
    }
    Ok(DeliverySchedule {
        layout,
        demands: demands.to_vec(),
        transmissions,
    })
}

/// Reconstructs user `k`'s demanded file from its cache and the schedule,
/// or `None` if some bit cannot be recovered.
pub fn decode(k: usize, cache: &CacheContents, schedule: &DeliverySchedule) -> Option<Bits> {
    let layout = &schedule.layout;
    let want = *schedule.demands.get(k)?;
    let file_bits = layout.subfiles.len() * layout.gamma * layout.mini_bits;
    let mut out = bitvec![u8, Msb0; 0; file_bits];
    let mut filled = vec![false; layout.subfiles.len() * layout.gamma];

    for (pos, tau) in layout.subfiles.iter().enumerate() {
        if !tau.contains(&k) {
            continue;
        }
        for j in 1..=layout.gamma {
            let id = MiniFileId {
                file: want,
                tau: tau.clone(),
                index: j,
            };
            let r = layout.range(tau, j)?;
            out[r].copy_from_bitslice(cache.minifile(&id)?);
            filled[pos * layout.gamma + j - 1] = true;
        }
    }

    for msg in schedule.transmissions.iter().flat_map(|t| &t.messages) {
        let Some(me) = msg.target.iter().position(|&u| u == k) else {
            continue;
        };
        let mut bits = msg.payload.clone();
        for (i, id) in msg.provenance.iter().enumerate() {
            if i != me {
                bits ^= cache.minifile(id)?;
            }
        }
        let id = &msg.provenance[me];
        if id.file != want {
            return None;
        }
        let r = layout.range(&id.tau, id.index)?;
        out[r].copy_from_bitslice(&bits);
        let pos = layout.subfile_pos(&id.tau)?;
        filled[pos * layout.gamma + id.index - 1] = true;
    }

    filled.iter().all(|&f| f).then_some(out)
}

/// True iff user `k` recovers its demanded file bit-exactly.
pub fn decode_and_verify(
    k: usize,
    cache: &CacheContents,
    schedule: &DeliverySchedule,
    lib: &Library,
) -> bool {
    let Some(&want) = schedule.demands.get(k) else {
        return false;
    };
    match decode(k, cache, schedule) {
        Some(bits) => want < lib.len() && bits.as_bitslice() == lib.file(want),
        None => false,
    }
}
