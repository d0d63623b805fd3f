//! The key-distillation engine: transmission, sifting, noise estimation,
//! majority blocks, parity bits and hash reconciliation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use crate::adversary::{EveStrategy, InterceptModel};
use crate::error::{invalid, Error, Result};
use crate::measurement::{bob_outcome_distribution, BobOutcome, EveOutcome, Geometry, PhotonState};
use crate::rng::{session_rng, trial_rng, SimRng};
use crate::security::KeyParameters;
use crate::wavepacket::AmplitudeProfile;

pub const TRANSCRIPT_SCHEMA: &str = "relqkd-transcript/1";

/// Extra rounds scheduled on top of the expected requirement.
const ROUND_MARGIN: f64 = 1.2;

/// Independent flip and loss applied to each conclusive outcome at B.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelNoise {
    pub flip: f64,
    pub loss: f64,
}

impl ChannelNoise {
    pub fn new(flip: f64, loss: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip) || !(0.0..=1.0).contains(&loss) {
            return Err(invalid(format!("noise probabilities must lie in [0, 1], got flip={flip}, loss={loss}")));
        }
        Ok(Self { flip, loss })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub params: KeyParameters,
    pub disclose_fraction: f64,
    pub geometry: Geometry,
    pub profile: AmplitudeProfile,
    pub noise: ChannelNoise,
    pub eve: Option<EveStrategy>,
    pub seed: u64,
}

impl ProtocolConfig {
    /// Ideal profile, noiseless channel, no eavesdropper, 10% disclosure.
    pub fn new(params: KeyParameters, geometry: Geometry, seed: u64) -> Result<Self> {
        let cfg = Self {
            params,
            disclose_fraction: 0.1,
            geometry,
            profile: AmplitudeProfile::ideal(geometry.plateau_length)?,
            noise: ChannelNoise::default(),
            eve: None,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.block_size % 2 == 0 {
            return Err(invalid(format!("block size must be odd, got {}", p.block_size)));
        }
        if p.blocks_per_parity == 0 || p.hash_rounds == 0 || p.key_length == 0 {
            return Err(invalid("N, n and M must all be at least 1"));
        }
        if !(self.disclose_fraction > 0.0 && self.disclose_fraction < 1.0) {
            return Err(invalid(format!(
                "disclose fraction must lie in (0, 1), got {}",
                self.disclose_fraction
            )));
        }
        if (self.profile.plateau_length() - self.geometry.plateau_length).abs() > 1e-12 {
            return Err(invalid("profile plateau length differs from the geometry"));
        }
        ChannelNoise::new(self.noise.flip, self.noise.loss)?;
        Ok(())
    }

    fn blocks_needed(&self) -> usize {
        (self.params.key_length + self.params.hash_rounds) as usize * self.params.blocks_per_parity as usize
    }
}

/// Per-round record, in the order the transcript stores it.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub id: usize,
    pub alice: u8,
    pub bob: BobOutcome,
    pub eve: Option<EveOutcome>,
    pub sifted: bool,
    pub disclosed: bool,
    pub block: Option<usize>,
    pub group: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashRecord {
    /// One-based round number `l`.
    pub round: u32,
    pub string: Vec<u8>,
    pub parity_a: u8,
    pub parity_b: u8,
    /// Position removed from both strings; `None` when the round aborted.
    pub discarded: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub params: KeyParameters,
    pub rounds: Vec<RoundRecord>,
    pub hashes: Vec<HashRecord>,
    pub error_estimate: f64,
    pub key_a: Vec<u8>,
    pub key_b: Vec<u8>,
    pub abort: Option<String>,
}

/// Indices of rounds with a conclusive outcome.
pub fn sift(outcomes: &[BobOutcome]) -> Vec<usize> {
    outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_conclusive())
        .map(|(i, _)| i)
        .collect()
}

/// Discloses a uniformly random `fraction` of the sifted rounds, marks them,
/// and returns their A/B mismatch rate.
pub fn estimate_error<R: Rng + ?Sized>(records: &mut [RoundRecord], fraction: f64, rng: &mut R) -> Result<f64> {
    let sifted: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.sifted && r.bob.is_conclusive())
        .map(|(i, _)| i)
        .collect();
    if sifted.is_empty() {
        return Err(invalid("no sifted rounds to disclose"));
    }
    let count = (fraction * sifted.len() as f64).round() as usize;
    if count == 0 {
        return Err(invalid(format!(
            "disclose fraction {fraction} selects no rounds out of {}",
            sifted.len()
        )));
    }
    let mut mismatches = 0usize;
    for pick in index::sample(rng, sifted.len(), count.min(sifted.len())) {
        let r = &mut records[sifted[pick]];
        r.disclosed = true;
        if r.bob.bit() != Some(r.alice) {
            mismatches += 1;
        }
    }
    Ok(mismatches as f64 / count as f64)
}

/// Majority value of an odd-length block.
pub fn majority_decode(block: &[u8]) -> Result<u8> {
    if block.len() % 2 == 0 {
        return Err(invalid(format!("majority of {} bits is undefined", block.len())));
    }
    let mut ones = 0usize;
    for &b in block {
        match b {
            0 => {}
            1 => ones += 1,
            other => return Err(invalid(format!("bit value {other}"))),
        }
    }
    Ok((2 * ones > block.len()) as u8)
}

/// Probability that a majority vote over `k` independently flipped copies
/// comes out wrong.
pub fn majority_failure_probability(k: u32, flip: f64) -> f64 {
    let mut c = 1.0;
    let mut total = 0.0;
    for j in 0..=k {
        if 2 * j > k {
            total += c * flip.powi(j as i32) * (1.0 - flip).powi((k - j) as i32);
        }
        c = c * (k - j) as f64 / (j + 1) as f64;
    }
    total
}

/// Groups the kept, undisclosed rounds into `count` blocks of `k` rounds
/// sharing the same value of A's bit. Block values are drawn with a fair coin.
pub fn form_blocks<R: Rng + ?Sized>(
    records: &mut [RoundRecord],
    k: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let mut queues: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in records.iter().enumerate() {
        if r.sifted && !r.disclosed {
            queues[r.alice as usize].push(i);
        }
    }
    let mut heads = [0usize; 2];
    let mut blocks = Vec::with_capacity(count);
    for id in 0..count {
        let v = rng.random_range(0..=1usize);
        if queues[v].len() - heads[v] < k {
            return Err(Error::ResourceExhausted(format!(
                "ran out of sifted rounds after {id} of {count} blocks"
            )));
        }
        let members = queues[v][heads[v]..heads[v] + k].to_vec();
        heads[v] += k;
        for &m in &members {
            records[m].block = Some(id);
        }
        blocks.push(members);
    }
    Ok(blocks)
}

/// Disjoint groups of `n` block indices after a public shuffle.
pub fn assign_parity_groups<R: Rng + ?Sized>(
    blocks: usize,
    n: usize,
    groups: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(invalid("parity groups need at least one block"));
    }
    if blocks < n * groups {
        return Err(Error::ResourceExhausted(format!(
            "{groups} parity groups of {n} need {} blocks, have {blocks}",
            n * groups
        )));
    }
    let mut order: Vec<usize> = (0..blocks).collect();
    order.shuffle(rng);
    Ok(order[..n * groups].chunks(n).map(|c| c.to_vec()).collect())
}

/// XOR of the block-wise bits in each group.
pub fn form_parity_bits(block_bits: &[u8], groups: &[Vec<usize>]) -> Result<Vec<u8>> {
    let mut used = vec![false; block_bits.len()];
    groups
        .iter()
        .map(|g| {
            let mut parity = 0u8;
            for &b in g {
                let bit = *block_bits.get(b).ok_or_else(|| {
                    Error::ResourceExhausted(format!("block {b} requested, only {} exist", block_bits.len()))
                })?;
                if std::mem::replace(&mut used[b], true) {
                    return Err(invalid(format!("block {b} appears in two parity groups")));
                }
                parity ^= bit;
            }
            Ok(parity)
        })
        .collect()
}

fn dot(s: &[u8], bits: &[u8]) -> u8 {
    s.iter().zip(bits).fold(0, |acc, (a, b)| acc ^ (a & b))
}

fn random_nonzero<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u8> {
    loop {
        let s: Vec<u8> = (0..len).map(|_| rng.random_range(0..=1u8)).collect();
        if s.contains(&1) {
            return s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashOutcome {
    pub key_a: Vec<u8>,
    pub key_b: Vec<u8>,
    pub aborted: bool,
    pub log: Vec<HashRecord>,
}

/// `M` rounds of random-subset parity comparison. Each matching round drops
/// the first position covered by the subset; a mismatch aborts.
pub fn hash_rounds<R: Rng + ?Sized>(bits_a: &[u8], bits_b: &[u8], rounds: u32, rng: &mut R) -> Result<HashOutcome> {
    if bits_a.len() != bits_b.len() {
        return Err(invalid(format!(
            "parity strings differ in length: {} vs {}",
            bits_a.len(),
            bits_b.len()
        )));
    }
    if rounds as usize >= bits_a.len() {
        return Err(invalid(format!(
            "{rounds} hash rounds would consume all {} parity bits",
            bits_a.len()
        )));
    }
    let mut a = bits_a.to_vec();
    let mut b = bits_b.to_vec();
    let mut log = Vec::with_capacity(rounds as usize);
    for l in 1..=rounds {
        let s = random_nonzero(a.len(), rng);
        let (pa, pb) = (dot(&s, &a), dot(&s, &b));
        if pa != pb {
            log.push(HashRecord { round: l, string: s, parity_a: pa, parity_b: pb, discarded: None });
            return Ok(HashOutcome { key_a: Vec::new(), key_b: Vec::new(), aborted: true, log });
        }
        let pos = s.iter().position(|x| *x == 1).expect("non-zero string");
        a.remove(pos);
        b.remove(pos);
        log.push(HashRecord { round: l, string: s, parity_a: pa, parity_b: pb, discarded: Some(pos) });
    }
    Ok(HashOutcome { key_a: a, key_b: b, aborted: false, log })
}

/// Precomputed per-round probabilities for a configuration.
#[derive(Debug, Clone, Copy)]
struct SessionModel {
    honest_pass: f64,
    intercept: Option<InterceptModel>,
}

impl SessionModel {
    fn new(cfg: &ProtocolConfig) -> Result<Self> {
        let g = &cfg.geometry;
        let state = PhotonState::honest(0, cfg.profile.clone(), 0.0)?;
        let honest_pass = bob_outcome_distribution(&state, &cfg.profile, g.bob_time(), &g.bob_domain())?.pass();
        let intercept = cfg
            .eve
            .as_ref()
            .map(|s| InterceptModel::new(g, &cfg.profile, s))
            .transpose()?;
        Ok(Self { honest_pass, intercept })
    }

    fn conclusive_rate(&self) -> f64 {
        match &self.intercept {
            Some(m) => m.bob_pass,
            None => self.honest_pass,
        }
    }
}

/// Runs one complete session.
pub fn run_session(cfg: &ProtocolConfig) -> Result<Transcript> {
    cfg.validate()?;
    let model = SessionModel::new(cfg)?;
    let raw = (cfg.blocks_needed() * cfg.params.block_size as usize) as f64;
    let keep = model.conclusive_rate() * (1.0 - cfg.noise.loss) * (1.0 - cfg.disclose_fraction);
    if !(keep > 0.0) {
        return Err(Error::ResourceExhausted("no round can survive sifting".into()));
    }
    let mut rounds = (raw / keep * ROUND_MARGIN).ceil() as usize + 16;
    match attempt_session(cfg, &model, rounds) {
        Err(Error::ResourceExhausted(_)) => {
            rounds *= 2;
            attempt_session(cfg, &model, rounds)
        }
        other => other,
    }
}

fn transmit(cfg: &ProtocolConfig, model: &SessionModel, rng: &mut SimRng) -> (u8, BobOutcome, Option<EveOutcome>) {
    let alice = rng.random_range(0..=1u8);
    let (eve, sent, pass) = match &model.intercept {
        Some(m) => {
            let fired = m.eve.sample(rng) != EveOutcome::NoFire;
            let (out, guess) = if fired {
                let out = if alice == 0 { EveOutcome::FiredZero } else { EveOutcome::FiredOne };
                (out, alice)
            } else {
                (EveOutcome::NoFire, rng.random_range(0..=1u8))
            };
            (Some(out), guess, m.bob_pass)
        }
        None => (None, alice, model.honest_pass),
    };
    let mut bob = if rng.random::<f64>() < pass {
        BobOutcome::from_bit(sent)
    } else {
        BobOutcome::Inconclusive
    };
    if let Some(b) = bob.bit() {
        if rng.random_bool(cfg.noise.loss) {
            bob = BobOutcome::Inconclusive;
        } else if rng.random_bool(cfg.noise.flip) {
            bob = BobOutcome::from_bit(b ^ 1);
        }
    }
    (alice, bob, eve)
}

fn attempt_session(cfg: &ProtocolConfig, model: &SessionModel, rounds: usize) -> Result<Transcript> {
    let mut rng = session_rng(cfg.seed);
    let p = cfg.params;

    let mut records: Vec<RoundRecord> = (0..rounds)
        .map(|id| {
            let (alice, bob, eve) = transmit(cfg, model, &mut rng);
            RoundRecord { id, alice, bob, eve, sifted: false, disclosed: false, block: None, group: None }
        })
        .collect();

    let outcomes: Vec<BobOutcome> = records.iter().map(|r| r.bob).collect();
    for i in sift(&outcomes) {
        records[i].sifted = true;
    }
    let error_estimate = estimate_error(&mut records, cfg.disclose_fraction, &mut rng)?;

    let blocks = form_blocks(&mut records, p.block_size as usize, cfg.blocks_needed(), &mut rng)?;
    let groups = assign_parity_groups(
        blocks.len(),
        p.blocks_per_parity as usize,
        (p.key_length + p.hash_rounds) as usize,
        &mut rng,
    )?;
    for (g, members) in groups.iter().enumerate() {
        for &b in members {
            for &r in &blocks[b] {
                records[r].group = Some(g);
            }
        }
    }

    let (bits_a, bits_b) = block_bits(&records, &blocks)?;
    let parity_a = form_parity_bits(&bits_a, &groups)?;
    let parity_b = form_parity_bits(&bits_b, &groups)?;
    let hashed = hash_rounds(&parity_a, &parity_b, p.hash_rounds, &mut rng)?;

    let abort = hashed.aborted.then(|| {
        let l = hashed.log.last().map(|h| h.round).unwrap_or(0);
        format!("parity mismatch in hash round {l}")
    });
    Ok(Transcript {
        params: p,
        rounds: records,
        hashes: hashed.log,
        error_estimate,
        key_a: hashed.key_a,
        key_b: hashed.key_b,
        abort,
    })
}

fn block_bits(records: &[RoundRecord], blocks: &[Vec<usize>]) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut a = Vec::with_capacity(blocks.len());
    let mut b = Vec::with_capacity(blocks.len());
    for members in blocks {
        let alice: Vec<u8> = members.iter().map(|&i| records[i].alice).collect();
        let bob = members
            .iter()
            .map(|&i| {
                records[i]
                    .bob
                    .bit()
                    .ok_or_else(|| invalid(format!("round {i} in a block is inconclusive")))
            })
            .collect::<Result<Vec<u8>>>()?;
        a.push(majority_decode(&alice)?);
        b.push(majority_decode(&bob)?);
    }
    Ok((a, b))
}

/// Simulates `blocks` majority-coded blocks of size `k` through a binary
/// symmetric channel and counts decoding errors.
pub fn simulate_block_errors(k: u32, flip: f64, blocks: u64, seed: u64) -> Result<u64> {
    if k % 2 == 0 {
        return Err(invalid(format!("block size must be odd, got {k}")));
    }
    ChannelNoise::new(flip, 0.0)?;
    const CHUNK: u64 = 4096;
    let chunks = blocks.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = trial_rng(seed, c);
            let mut errors = 0u64;
            let mut block = vec![0u8; k as usize];
            for _ in (c * CHUNK)..((c + 1) * CHUNK).min(blocks) {
                let v = rng.random_range(0..=1u8);
                for b in block.iter_mut() {
                    *b = v ^ rng.random_bool(flip) as u8;
                }
                if majority_decode(&block)? != v {
                    errors += 1;
                }
            }
            Ok(errors)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Hashes random strings of length `len` that differ in exactly one position
/// and counts the sessions that finish without noticing.
pub fn simulate_single_discrepancy(len: usize, rounds: u32, trials: u64, seed: u64) -> Result<u64> {
    if rounds as usize >= len {
        return Err(invalid(format!("{rounds} hash rounds would consume all {len} bits")));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let a: Vec<u8> = (0..len).map(|_| rng.random_range(0..=1u8)).collect();
            let mut b = a.clone();
            b[rng.random_range(0..len)] ^= 1;
            Ok((!hash_rounds(&a, &b, rounds, &mut rng)?.aborted) as u64)
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))
}

fn bit_string(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

fn parse_bits(s: &str, line: usize) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::Parse { line, message: format!("bad bit {c:?}") }),
        })
        .collect()
}

impl Transcript {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    /// Round indices of each block, in block order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rounds.iter().enumerate() {
            if let Some(b) = r.block {
                map.entry(b).or_default().push(i);
            }
        }
        map.into_values().collect()
    }

    pub fn sifted_count(&self) -> usize {
        self.rounds.iter().filter(|r| r.sifted).count()
    }

    pub fn disclosed_count(&self) -> usize {
        self.rounds.iter().filter(|r| r.disclosed).count()
    }

    /// Fraction of blocks whose majority at B differs from A's block value.
    pub fn block_error_rate(&self) -> Result<f64> {
        let blocks = self.blocks();
        if blocks.is_empty() {
            return Ok(0.0);
        }
        let (a, b) = block_bits(&self.rounds, &blocks)?;
        let errors = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        Ok(errors as f64 / blocks.len() as f64)
    }

    /// Recomputes both keys from the round records and the public hashing log.
    pub fn replay(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let blocks = self.blocks();
        let (bits_a, bits_b) = block_bits(&self.rounds, &blocks)?;
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (b, members) in blocks.iter().enumerate() {
            let g = self.rounds[members[0]].group;
            if members.iter().any(|&i| self.rounds[i].group != g) {
                return Err(invalid(format!("block {b} spans several parity groups")));
            }
            if let Some(g) = g {
                groups.entry(g).or_default().push(b);
            }
        }
        let groups: Vec<Vec<usize>> = groups.into_values().collect();
        let mut a = form_parity_bits(&bits_a, &groups)?;
        let mut b = form_parity_bits(&bits_b, &groups)?;
        for h in &self.hashes {
            if h.string.len() != a.len() {
                return Err(invalid(format!("hash round {} has a string of the wrong length", h.round)));
            }
            let (pa, pb) = (dot(&h.string, &a), dot(&h.string, &b));
            if (pa, pb) != (h.parity_a, h.parity_b) {
                return Err(invalid(format!("hash round {} parities do not replay", h.round)));
            }
            match h.discarded {
                Some(pos) if pa == pb => {
                    a.remove(pos);
                    b.remove(pos);
                }
                _ => return Ok((Vec::new(), Vec::new())),
            }
        }
        Ok((a, b))
    }

    /// Line-oriented text: a schema line, parameters, one tab-separated
    /// record per round, the hashing log, then keys and abort status.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(s, "# {TRANSCRIPT_SCHEMA}");
        let _ = writeln!(s, "params\t{}\t{}\t{}\t{}", p.key_length, p.block_size, p.blocks_per_parity, p.hash_rounds);
        let _ = writeln!(s, "# round\talice\tbob\teve\tsifted\tdisclosed\tblock\tgroup");
        for r in &self.rounds {
            let bob = match r.bob {
                BobOutcome::Zero => "0",
                BobOutcome::One => "1",
                BobOutcome::Inconclusive => "?",
            };
            let eve = match r.eve {
                None => "-",
                Some(EveOutcome::FiredZero) => "0",
                Some(EveOutcome::FiredOne) => "1",
                Some(EveOutcome::NoFire) => "x",
            };
            let opt = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.id,
                r.alice,
                bob,
                eve,
                r.sifted as u8,
                r.disclosed as u8,
                opt(r.block),
                opt(r.group)
            );
        }
        for h in &self.hashes {
            let _ = writeln!(
                s,
                "hash\t{}\t{}\t{}\t{}\t{}",
                h.round,
                bit_string(&h.string),
                h.parity_a,
                h.parity_b,
                h.discarded.map_or("-".to_string(), |x| x.to_string())
            );
        }
        let _ = writeln!(s, "error_estimate\t{}", self.error_estimate);
        let _ = writeln!(s, "key_a\t{}", bit_string(&self.key_a));
        let _ = writeln!(s, "key_b\t{}", bit_string(&self.key_b));
        let _ = writeln!(s, "abort\t{}", self.abort.as_deref().unwrap_or("-"));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == format!("# {TRANSCRIPT_SCHEMA}") => {}
            _ => return Err(Error::Parse { line: 1, message: format!("expected '# {TRANSCRIPT_SCHEMA}'") }),
        }
        let mut params = None;
        let mut rounds = Vec::new();
        let mut hashes = Vec::new();
        let mut error_estimate = 0.0;
        let mut key_a = Vec::new();
        let mut key_b = Vec::new();
        let mut abort = None;

        for (i, line) in lines {
            let n = i + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let perr = |m: &str| Error::Parse { line: n, message: m.to_string() };
            let num = |s: &str| s.parse::<usize>().map_err(|_| perr(&format!("bad number {s:?}")));
            let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(perr(&format!("bad flag {s:?}"))),
            };
            match f[0] {
                "params" if f.len() == 5 => {
                    params = Some(KeyParameters {
                        key_length: num(f[1])? as u32,
                        block_size: num(f[2])? as u32,
                        blocks_per_parity: num(f[3])? as u32,
                        hash_rounds: num(f[4])? as u32,
                    });
                }
                "hash" if f.len() == 6 => hashes.push(HashRecord {
                    round: num(f[1])? as u32,
                    string: parse_bits(f[2], n)?,
                    parity_a: num(f[3])? as u8,
                    parity_b: num(f[4])? as u8,
                    discarded: opt(f[5])?,
                }),
                "error_estimate" if f.len() == 2 => {
                    error_estimate = f[1].parse().map_err(|_| perr("bad error estimate"))?;
                }
                "key_a" if f.len() == 2 => key_a = parse_bits(f[1], n)?,
                "key_b" if f.len() == 2 => key_b = parse_bits(f[1], n)?,
                "abort" if f.len() == 2 => abort = (f[1] != "-").then(|| f[1].to_string()),
                first if first.starts_with(|c: char| c.is_ascii_digit()) && f.len() == 8 => {
                    let bob = match f[2] {
                        "0" => BobOutcome::Zero,
                        "1" => BobOutcome::One,
                        "?" => BobOutcome::Inconclusive,
                        o => return Err(perr(&format!("bad outcome {o:?}"))),
                    };
                    let eve = match f[3] {
                        "-" => None,
                        "0" => Some(EveOutcome::FiredZero),
                        "1" => Some(EveOutcome::FiredOne),
                        "x" => Some(EveOutcome::NoFire),
                        o => return Err(perr(&format!("bad outcome {o:?}"))),
                    };
                    let alice = num(f[1])?;
                    if alice > 1 {
                        return Err(perr("alice bit out of range"));
                    }
                    rounds.push(RoundRecord {
                        id: num(f[0])?,
                        alice: alice as u8,
                        bob,
                        eve,
                        sifted: flag(f[4])?,
                        disclosed: flag(f[5])?,
                        block: opt(f[6])?,
                        group: opt(f[7])?,
                    });
                }
                _ => return Err(perr(&format!("unrecognized line {line:?}"))),
            }
        }
        Ok(Self {
            params: params.ok_or(Error::Parse { line: 2, message: "missing params line".into() })?,
            rounds,
            hashes,
            error_estimate,
            key_a,
            key_b,
            abort,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::ResendPolicy;

    fn params(n_key: u32, k: u32, n: u32, m: u32) -> KeyParameters {
        KeyParameters { key_length: n_key, block_size: k, blocks_per_parity: n, hash_rounds: m }
    }

    fn ideal_config(seed: u64) -> ProtocolConfig {
        ProtocolConfig::new(params(16, 3, 4, 8), Geometry::new(1.0, 0.5).unwrap(), seed).unwrap()
    }

    #[test]
    fn noiseless_session_agrees() {
        let t = run_session(&ideal_config(1)).unwrap();
        assert!(!t.aborted());
        assert_eq!(t.key_a.len(), 16);
        assert_eq!(t.key_a, t.key_b);
        assert!(t.rounds.iter().all(|r| r.bob.bit() == Some(r.alice)));
        assert_eq!(t.error_estimate, 0.0);
    }

    #[test]
    fn session_is_deterministic() {
        let a = run_session(&ideal_config(42)).unwrap();
        let b = run_session(&ideal_config(42)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = run_session(&ideal_config(43)).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn transcript_invariants() {
        let mut cfg = ideal_config(5);
        cfg.noise = ChannelNoise::new(0.02, 0.2).unwrap();
        let t = run_session(&cfg).unwrap();
        for r in &t.rounds {
            assert_eq!(r.sifted, r.bob.is_conclusive());
            if r.block.is_some() {
                assert!(r.sifted && !r.disclosed && r.group.is_some());
            }
            if r.disclosed {
                assert!(r.sifted);
            }
        }
        let blocks = t.blocks();
        assert_eq!(blocks.len(), (16 + 8) * 4);
        assert!(blocks.iter().all(|b| b.len() == 3));
        for b in &blocks {
            let v = t.rounds[b[0]].alice;
            assert!(b.iter().all(|&i| t.rounds[i].alice == v));
        }
        if !t.aborted() {
            assert_eq!(t.key_a.len(), 16);
        }
    }

    #[test]
    fn replay_reproduces_keys() {
        let mut cfg = ideal_config(9);
        cfg.noise = ChannelNoise::new(0.05, 0.0).unwrap();
        let t = run_session(&cfg).unwrap();
        let (a, b) = t.replay().unwrap();
        assert_eq!(a, t.key_a);
        assert_eq!(b, t.key_b);
        let parsed = Transcript::parse(&t.to_text()).unwrap();
        assert_eq!(parsed, t);
        assert_eq!(parsed.replay().unwrap(), (t.key_a.clone(), t.key_b.clone()));
    }

    #[test]
    fn sift_edge_cases() {
        use BobOutcome::*;
        assert_eq!(sift(&[Zero, One, One]), vec![0, 1, 2]);
        assert!(sift(&[Inconclusive, Inconclusive]).is_empty());
        assert_eq!(sift(&[Inconclusive, One, Inconclusive, Zero]), vec![1, 3]);
    }

    #[test]
    fn majority_cases() {
        assert_eq!(majority_decode(&[0, 0, 0, 0, 0]).unwrap(), 0);
        assert_eq!(majority_decode(&[0, 1, 0, 1, 0]).unwrap(), 0);
        assert_eq!(majority_decode(&[1, 1, 0, 1, 1]).unwrap(), 1);
        assert!(majority_decode(&[1, 0]).is_err());
        assert!(majority_decode(&[2]).is_err());
    }

    #[test]
    fn parity_bits() {
        let groups = vec![vec![0, 1], vec![2, 3]];
        assert_eq!(form_parity_bits(&[0, 0, 0, 0], &groups).unwrap(), vec![0, 0]);
        assert_eq!(form_parity_bits(&[0, 1, 0, 0], &groups).unwrap(), vec![1, 0]);
        assert!(matches!(
            form_parity_bits(&[0, 1, 0], &groups),
            Err(Error::ResourceExhausted(_))
        ));
        assert!(form_parity_bits(&[0, 1, 0, 1], &[vec![0, 1], vec![1, 2]]).is_err());
        let mut rng = session_rng(1);
        assert!(assign_parity_groups(5, 3, 2, &mut rng).is_err());
        let g = assign_parity_groups(12, 3, 4, &mut rng).unwrap();
        let mut all: Vec<usize> = g.concat();
        all.sort();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn hashing_identical_strings_never_aborts() {
        let mut rng = session_rng(2);
        let bits: Vec<u8> = (0..24).map(|i| (i % 3 == 0) as u8).collect();
        let out = hash_rounds(&bits, &bits, 8, &mut rng).unwrap();
        assert!(!out.aborted);
        assert_eq!(out.key_a.len(), 16);
        assert_eq!(out.key_a, out.key_b);
        for (i, h) in out.log.iter().enumerate() {
            assert_eq!(h.string.len(), 24 - i);
            assert!(h.string.contains(&1));
        }
    }

    #[test]
    fn hashing_rejects_bad_lengths() {
        let mut rng = session_rng(2);
        assert!(hash_rounds(&[0, 1], &[0], 1, &mut rng).is_err());
        assert!(hash_rounds(&[0, 1], &[0, 1], 2, &mut rng).is_err());
    }

    #[test]
    fn error_estimate_needs_disclosures() {
        let mut recs: Vec<RoundRecord> = (0..3)
            .map(|id| RoundRecord {
                id,
                alice: 0,
                bob: BobOutcome::Zero,
                eve: None,
                sifted: true,
                disclosed: false,
                block: None,
                group: None,
            })
            .collect();
        let mut rng = session_rng(1);
        assert!(estimate_error(&mut recs, 0.1, &mut rng).is_err());
        assert_eq!(estimate_error(&mut recs, 0.5, &mut rng).unwrap(), 0.0);
        assert_eq!(recs.iter().filter(|r| r.disclosed).count(), 2);
        for r in &mut recs {
            r.sifted = false;
        }
        assert!(estimate_error(&mut recs, 0.5, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        let g = Geometry::new(1.0, 0.5).unwrap();
        assert!(ProtocolConfig::new(params(16, 4, 4, 8), g, 1).is_err());
        assert!(ProtocolConfig::new(params(16, 3, 0, 8), g, 1).is_err());
        let mut cfg = ideal_config(1);
        cfg.disclose_fraction = 1.0;
        assert!(run_session(&cfg).is_err());
    }

    #[test]
    fn eavesdropper_raises_mismatch_rate() {
        let mut cfg = ideal_config(3);
        let s = EveStrategy::new(0.2, &cfg.geometry, ResendPolicy::TruncatedRenormalized).unwrap();
        cfg.eve = Some(s);
        let t = run_session(&cfg).unwrap();
        assert!(t.error_estimate > 0.0);
        assert!(t.rounds.iter().all(|r| r.eve.is_some()));
    }

    #[test]
    fn failure_probability_matches_hand_value() {
        // 10 p^3 q^2 + 5 p^4 q + p^5 at p = 0.05
        let p: f64 = 0.05;
        let q = 1.0 - p;
        let hand = 10.0 * p.powi(3) * q * q + 5.0 * p.powi(4) * q + p.powi(5);
        assert!((majority_failure_probability(5, p) - hand).abs() < 1e-15);
    }
}
