use std::collections::VecDeque;
use std::fmt;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::data::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng, Stream};

/// How training data is split across clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionSpec {
    /// Each client sees `classes_per_client` classes with
    /// `images_per_class` images of each.
    Pathological {
        num_clients: usize,
        classes_per_client: usize,
        images_per_class: usize,
    },
    /// Per-class proportions drawn from Dirichlet(β·1).
    Dirichlet { num_clients: usize, beta: f64 },
}

impl PartitionSpec {
    pub fn num_clients(&self) -> usize {
        match *self {
            PartitionSpec::Pathological { num_clients, .. } | PartitionSpec::Dirichlet { num_clients, .. } => {
                num_clients
            }
        }
    }
}

impl fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PartitionSpec::Pathological {
                num_clients,
                classes_per_client,
                images_per_class,
            } => write!(f, "pathological({num_clients},{classes_per_client},{images_per_class})"),
            PartitionSpec::Dirichlet { num_clients, beta } => write!(f, "dirichlet({num_clients},{beta})"),
        }
    }
}

/// Splits `ds` according to `spec`.
pub fn partition(ds: &LabeledDataset, spec: PartitionSpec, seed: u64) -> Result<Vec<ClientShard>> {
    match spec {
        PartitionSpec::Pathological {
            num_clients,
            classes_per_client,
            images_per_class,
        } => partition_pathological(ds, num_clients, classes_per_client, images_per_class, seed),
        PartitionSpec::Dirichlet { num_clients, beta } => partition_dirichlet(ds, num_clients, beta, seed),
    }
}

/// Sample indices of each class, in dataset order.
fn class_pools(ds: &LabeledDataset) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        pools[l].push(i);
    }
    pools
}

/// Class assignment: clients draw from a stream of concatenated seeded
/// shuffles of the class list, skipping classes they already hold (skipped
/// classes stay at the front for the next client).
fn assign_classes(num_classes: usize, num_clients: usize, per_client: usize, rng: &mut SimRng) -> Vec<Vec<usize>> {
    let mut queue: VecDeque<usize> = VecDeque::new();
    let refill = |queue: &mut VecDeque<usize>, rng: &mut SimRng| {
        let mut order: Vec<usize> = (0..num_classes).collect();
        order.shuffle(rng);
        queue.extend(order);
    };
    let mut out = Vec::with_capacity(num_clients);
    for _ in 0..num_clients {
        let mut mine = Vec::with_capacity(per_client);
        let mut skipped = Vec::new();
        while mine.len() < per_client {
            if queue.is_empty() {
                refill(&mut queue, rng);
            }
            let c = queue.pop_front().expect("refilled");
            if mine.contains(&c) {
                skipped.push(c);
            } else {
                mine.push(c);
            }
        }
        for c in skipped.into_iter().rev() {
            queue.push_front(c);
        }
        out.push(mine);
    }
    out
}

/// Pathological non-iid split. Images are drawn without replacement from a
/// seeded shuffle of each class pool; if a pool runs out it wraps around
/// (logged), so shards may then overlap.
pub fn partition_pathological(
    ds: &LabeledDataset,
    num_clients: usize,
    classes_per_client: usize,
    images_per_class: usize,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    if num_clients == 0 || classes_per_client == 0 || images_per_class == 0 {
        return Err(Error::config("pathological partition parameters must be positive"));
    }
    if classes_per_client > ds.num_classes() {
        return Err(Error::config(format!(
            "{classes_per_client} classes per client but the dataset has {}",
            ds.num_classes()
        )));
    }
    let mut rng = stream_rng(seed, Stream::Partition, 0, 0);
    let mut pools = class_pools(ds);
    for (c, pool) in pools.iter_mut().enumerate() {
        if pool.len() < images_per_class {
            return Err(Error::config(format!(
                "class {c} has {} images, fewer than {images_per_class} per client",
                pool.len()
            )));
        }
        pool.shuffle(&mut rng);
    }
    let assignment = assign_classes(ds.num_classes(), num_clients, classes_per_client, &mut rng);
    let mut cursor = vec![0usize; ds.num_classes()];
    let mut wrapped = vec![false; ds.num_classes()];
    let mut shards = Vec::with_capacity(num_clients);
    for (client, classes) in assignment.into_iter().enumerate() {
        let mut indices = Vec::with_capacity(classes_per_client * images_per_class);
        for c in classes {
            let pool = &pools[c];
            if cursor[c] + images_per_class > pool.len() {
                if !wrapped[c] {
                    warn!("class {c} pool exhausted; reusing its images across clients");
                    wrapped[c] = true;
                }
                cursor[c] = 0;
            }
            indices.extend_from_slice(&pool[cursor[c]..cursor[c] + images_per_class]);
            cursor[c] += images_per_class;
        }
        shards.push(ClientShard { client, indices });
    }
    Ok(shards)
}

/// Largest-remainder rounding of `total · p` to integers summing to `total`;
/// ties go to the lower index.
fn apportion(total: usize, proportions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = proportions.iter().map(|&p| p * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|&r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (raw[a] - raw[a].floor(), raw[b] - raw[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn dirichlet(beta: f64, n: usize, rng: &mut SimRng) -> Vec<f64> {
    let gamma = Gamma::new(beta, 1.0).expect("beta > 0");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter().map(|d| d / sum).collect()
    } else {
        // Every draw underflowed: put the whole class on one random client.
        let mut p = vec![0.0; n];
        p[rng.random_range(0..n)] = 1.0;
        p
    }
}

/// Dirichlet non-iid split: every sample lands in exactly one shard. Empty
/// shards then take one sample from the currently largest shard.
pub fn partition_dirichlet(ds: &LabeledDataset, num_clients: usize, beta: f64, seed: u64) -> Result<Vec<ClientShard>> {
    if num_clients == 0 {
        return Err(Error::config("dirichlet partition needs at least one client"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::config(format!("dirichlet beta must be positive, got {beta}")));
    }
    if ds.len() < num_clients {
        return Err(Error::config(format!(
            "{} samples cannot fill {num_clients} non-empty shards",
            ds.len()
        )));
    }
    let mut rng = stream_rng(seed, Stream::Partition, 1, 0);
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for mut pool in class_pools(ds) {
        pool.shuffle(&mut rng);
        let counts = apportion(pool.len(), &dirichlet(beta, num_clients, &mut rng));
        let mut start = 0;
        for (shard, &k) in shards.iter_mut().zip(&counts) {
            shard.extend_from_slice(&pool[start..start + k]);
            start += k;
        }
    }
    for i in 0..num_clients {
        if shards[i].is_empty() {
            let donor = (0..num_clients)
                .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
                .expect("nonempty");
            let moved = shards[donor].pop().expect("donor has samples");
            shards[i].push(moved);
        }
    }
    Ok(shards
        .into_iter()
        .enumerate()
        .map(|(client, indices)| ClientShard { client, indices })
        .collect())
}

/// Splits a shard into (train, validation) with `floor(frac · n_c)`
/// validation samples chosen by a seeded shuffle; train keeps at least one.
pub fn split_holdout(shard: &ClientShard, frac: f64, seed: u64) -> (ClientShard, ClientShard) {
    let mut idx = shard.indices.clone();
    idx.shuffle(&mut stream_rng(seed, Stream::Partition, 2, shard.client as u64));
    let n_val = ((frac * idx.len() as f64).floor() as usize).min(idx.len().saturating_sub(1));
    let val = idx.split_off(idx.len() - n_val);
    (
        ClientShard {
            client: shard.client,
            indices: idx,
        },
        ClientShard {
            client: shard.client,
            indices: val,
        },
    )
}
