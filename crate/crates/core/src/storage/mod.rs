//! Replicated storage of models and datasets on keeper nodes.
//!
//! Objects are addressed by the SHA3-512 digest of their bytes. Each is
//! placed on `required` distinct keepers, healed when keepers leave, and
//! audited by re-hashing a keeper's copy.

mod persist;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Chain, LedgerError, ModelRegistry};
use crate::Hash512;

pub use persist::{load_keeper_stores, save_keeper_stores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Model,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keeper {
    pub id: String,
    pub capacity: u64,
    pub used: u64,
    pub alive: bool,
}

impl Keeper {
    pub fn free(&self) -> u64 {
        self.capacity - self.used
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaAssignment {
    pub object_id: Hash512,
    pub holders: BTreeSet<String>,
    pub required: usize,
}

impl ReplicaAssignment {
    pub fn is_under_replicated(&self) -> bool {
        self.holders.len() < self.required
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredObject {
    pub size: u64,
    pub kind: ObjectKind,
    pub assignment: ReplicaAssignment,
    /// Set once no verified copy survives.
    pub lost: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StorageError {
    #[error("only {placed} of {required} replicas placed for {object}")]
    InsufficientKeepers {
        object: Hash512,
        placed: usize,
        required: usize,
    },
    #[error("dataset replication {r_data} is below model replication {r}")]
    DatasetReplicationTooLow { r_data: usize, r: usize },
    #[error("unknown keeper {0}")]
    UnknownKeeper(String),
    #[error("keeper {0} already exists")]
    DuplicateKeeper(String),
    #[error("unknown object {0}")]
    UnknownObject(Hash512),
}

/// One blob copy made while healing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Copy {
    pub object: Hash512,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HealingPlan {
    pub copies: Vec<Copy>,
    /// Objects with no verified copy left.
    pub lost: Vec<Hash512>,
    /// Objects still short of replicas after healing.
    pub under_replicated: Vec<Hash512>,
}

impl HealingPlan {
    fn merge(&mut self, other: HealingPlan) {
        self.copies.extend(other.copies);
        self.lost.extend(other.lost);
        self.under_replicated.extend(other.under_replicated);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOutcome {
    Pass,
    TamperDetected,
    MissingReplica,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub keeper: String,
    pub object: Hash512,
    pub outcome: AuditOutcome,
    /// Amount actually burned from the keeper.
    pub penalty: u64,
    pub healing: HealingPlan,
}

/// Rent and penalty amounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoragePolicy {
    pub rent_per_object: u64,
    pub penalty: u64,
}

impl Default for StoragePolicy {
    fn default() -> Self {
        StoragePolicy {
            rent_per_object: 1,
            penalty: 5,
        }
    }
}

/// Keepers, their stores and the object directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StorageDirectory {
    keepers: BTreeMap<String, Keeper>,
    stores: BTreeMap<String, BTreeMap<Hash512, Vec<u8>>>,
    objects: BTreeMap<Hash512, StoredObject>,
    /// Miner-side read-only dataset copies; never audited or counted as
    /// replicas.
    caches: BTreeMap<String, BTreeMap<Hash512, Vec<u8>>>,
}

impl StorageDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_keeper(&mut self, id: &str, capacity: u64) -> Result<(), StorageError> {
        if self.keepers.contains_key(id) {
            return Err(StorageError::DuplicateKeeper(id.to_string()));
        }
        self.keepers.insert(
            id.to_string(),
            Keeper {
                id: id.to_string(),
                capacity,
                used: 0,
                alive: true,
            },
        );
        self.stores.insert(id.to_string(), BTreeMap::new());
        Ok(())
    }

    pub fn keeper(&self, id: &str) -> Option<&Keeper> {
        self.keepers.get(id)
    }

    pub fn keepers(&self) -> impl Iterator<Item = &Keeper> {
        self.keepers.values()
    }

    pub fn object(&self, id: &Hash512) -> Option<&StoredObject> {
        self.objects.get(id)
    }

    pub fn objects(&self) -> &BTreeMap<Hash512, StoredObject> {
        &self.objects
    }

    /// A keeper's copy of an object, if it has one.
    pub fn stored(&self, keeper: &str, object: &Hash512) -> Option<&[u8]> {
        self.stores.get(keeper)?.get(object).map(Vec::as_slice)
    }

    pub fn stores(&self) -> &BTreeMap<String, BTreeMap<Hash512, Vec<u8>>> {
        &self.stores
    }

    pub fn cache(&self, miner: &str) -> Option<&BTreeMap<Hash512, Vec<u8>>> {
        self.caches.get(miner)
    }

    pub fn under_replicated_count(&self) -> usize {
        self.objects
            .values()
            .filter(|o| !o.lost && o.assignment.is_under_replicated())
            .count()
    }

    pub fn lost_count(&self) -> usize {
        self.objects.values().filter(|o| o.lost).count()
    }

    /// Alive keepers that can take `size` more bytes and do not yet hold
    /// `object`, by free space descending then id ascending.
    fn candidates(&self, object: &Hash512, size: u64, exclude: &BTreeSet<String>) -> Vec<String> {
        let mut ks: Vec<&Keeper> = self
            .keepers
            .values()
            .filter(|k| k.alive && k.free() >= size && !exclude.contains(&k.id))
            .filter(|k| !self.stores[&k.id].contains_key(object))
            .collect();
        ks.sort_by(|a, b| b.free().cmp(&a.free()).then(a.id.cmp(&b.id)));
        ks.into_iter().map(|k| k.id.clone()).collect()
    }

    fn put(&mut self, keeper: &str, object: Hash512, bytes: Vec<u8>) {
        let k = self.keepers.get_mut(keeper).unwrap();
        k.used += bytes.len() as u64;
        debug_assert!(k.used <= k.capacity);
        self.stores.get_mut(keeper).unwrap().insert(object, bytes);
        self.objects.get_mut(&object).unwrap().assignment.holders.insert(keeper.to_string());
    }

    fn drop_replica(&mut self, keeper: &str, object: &Hash512) {
        if let Some(bytes) = self.stores.get_mut(keeper).and_then(|s| s.remove(object)) {
            self.keepers.get_mut(keeper).unwrap().used -= bytes.len() as u64;
        }
        if let Some(o) = self.objects.get_mut(object) {
            o.assignment.holders.remove(keeper);
        }
    }

    /// Stores `bytes` under its digest on up to `r` keepers chosen by the
    /// placement rule. Storing an already known object tops it up instead.
    /// Placing fewer than `r` copies stores what fits and returns
    /// `InsufficientKeepers`.
    pub fn assign_replicas(&mut self, bytes: &[u8], kind: ObjectKind, r: usize) -> Result<ReplicaAssignment, StorageError> {
        let id = Hash512::digest(bytes);
        let size = bytes.len() as u64;
        self.objects.entry(id).or_insert_with(|| StoredObject {
            size,
            kind,
            assignment: ReplicaAssignment {
                object_id: id,
                holders: BTreeSet::new(),
                required: r,
            },
            lost: false,
        });
        let obj = &self.objects[&id];
        let missing = obj.assignment.required.saturating_sub(obj.assignment.holders.len());
        for k in self.candidates(&id, size, &BTreeSet::new()).into_iter().take(missing) {
            self.put(&k, id, bytes.to_vec());
        }
        let a = self.objects[&id].assignment.clone();
        if a.is_under_replicated() {
            return Err(StorageError::InsufficientKeepers {
                object: id,
                placed: a.holders.len(),
                required: a.required,
            });
        }
        Ok(a)
    }

    /// Stores a dataset at `r_data` replicas and gives each miner a local
    /// cached copy.
    pub fn store_dataset(
        &mut self,
        bytes: &[u8],
        r_data: usize,
        r: usize,
        miners: &[String],
    ) -> Result<ReplicaAssignment, StorageError> {
        if r_data < r {
            return Err(StorageError::DatasetReplicationTooLow { r_data, r });
        }
        let id = Hash512::digest(bytes);
        for m in miners {
            self.caches.entry(m.clone()).or_default().insert(id, bytes.to_vec());
        }
        self.assign_replicas(bytes, ObjectKind::Dataset, r_data)
    }

    /// Tops `object` back up to its required replica count, copying from a
    /// holder whose copy still verifies.
    fn heal_object(&mut self, object: &Hash512, exclude: &BTreeSet<String>) -> HealingPlan {
        let mut plan = HealingPlan::default();
        let Some(obj) = self.objects.get(object) else {
            return plan;
        };
        if obj.lost {
            return plan;
        }
        let missing = obj.assignment.required.saturating_sub(obj.assignment.holders.len());
        let source = obj
            .assignment
            .holders
            .iter()
            .find(|h| self.stores[*h].get(object).is_some_and(|b| Hash512::digest(b) == *object))
            .cloned();
        let Some(source) = source else {
            self.objects.get_mut(object).unwrap().lost = true;
            plan.lost.push(*object);
            return plan;
        };
        if missing == 0 {
            return plan;
        }
        let bytes = self.stores[&source][object].clone();
        let targets = self.candidates(object, obj.size, exclude);
        for to in targets.into_iter().take(missing) {
            self.put(&to, *object, bytes.clone());
            plan.copies.push(Copy {
                object: *object,
                from: source.clone(),
                to,
            });
        }
        if self.objects[object].assignment.is_under_replicated() {
            plan.under_replicated.push(*object);
        }
        plan
    }

    /// Heals every under-replicated object.
    pub fn heal_all(&mut self) -> HealingPlan {
        let ids: Vec<Hash512> = self
            .objects
            .iter()
            .filter(|(_, o)| !o.lost && o.assignment.is_under_replicated())
            .map(|(id, _)| *id)
            .collect();
        let mut plan = HealingPlan::default();
        for id in ids {
            plan.merge(self.heal_object(&id, &BTreeSet::new()));
        }
        plan
    }

    /// Marks a keeper dead, drops its store and re-replicates what it held.
    pub fn on_keeper_departure(&mut self, keeper: &str) -> Result<HealingPlan, StorageError> {
        self.depart_many(&[keeper])
    }

    /// Simultaneous departure of several keepers, healed in one pass.
    pub fn depart_many(&mut self, keepers: &[&str]) -> Result<HealingPlan, StorageError> {
        let mut affected = BTreeSet::new();
        for &id in keepers {
            if !self.keepers.contains_key(id) {
                return Err(StorageError::UnknownKeeper(id.to_string()));
            }
        }
        for &id in keepers {
            let held: Vec<Hash512> = self.stores[id].keys().copied().collect();
            for o in held {
                self.drop_replica(id, &o);
                affected.insert(o);
            }
            self.keepers.get_mut(id).unwrap().alive = false;
        }
        let mut plan = HealingPlan::default();
        for o in affected {
            plan.merge(self.heal_object(&o, &BTreeSet::new()));
        }
        Ok(plan)
    }

    /// Brings a departed keeper back with an empty store.
    pub fn rejoin(&mut self, keeper: &str) -> Result<(), StorageError> {
        let k = self
            .keepers
            .get_mut(keeper)
            .ok_or_else(|| StorageError::UnknownKeeper(keeper.to_string()))?;
        k.alive = true;
        Ok(())
    }

    /// Re-hashes the keeper's copy and compares it with the object id.
    pub fn audit(&self, keeper: &str, object: &Hash512) -> AuditOutcome {
        match self.stored(keeper, object) {
            None => AuditOutcome::MissingReplica,
            Some(b) if Hash512::digest(b) == *object => AuditOutcome::Pass,
            Some(_) => AuditOutcome::TamperDetected,
        }
    }

    /// Audits and, on failure, drops the replica, penalizes the keeper on
    /// `chain` and heals the object elsewhere.
    pub fn audit_and_enforce(
        &mut self,
        keeper: &str,
        object: &Hash512,
        chain: &mut Chain,
        policy: &StoragePolicy,
    ) -> AuditReport {
        let outcome = self.audit(keeper, object);
        let mut report = AuditReport {
            keeper: keeper.to_string(),
            object: *object,
            outcome,
            penalty: 0,
            healing: HealingPlan::default(),
        };
        if outcome != AuditOutcome::Pass {
            self.drop_replica(keeper, object);
            report.penalty = chain.penalize(keeper, policy.penalty);
            let exclude = BTreeSet::from([keeper.to_string()]);
            report.healing = self.heal_object(object, &exclude);
        }
        report
    }

    /// (keeper, object) pairs an audit could target, in sorted order.
    pub fn audit_pairs(&self) -> Vec<(String, Hash512)> {
        self.objects
            .iter()
            .flat_map(|(id, o)| o.assignment.holders.iter().map(move |h| (h.clone(), *id)))
            .filter(|(h, _)| self.keepers[h].alive)
            .collect()
    }

    /// A seeded sample of `rate` of the audit pairs, at least one if any
    /// exist.
    pub fn sample_audit_pairs<R: Rng>(&self, rate: f64, rng: &mut R) -> Vec<(String, Hash512)> {
        let pairs = self.audit_pairs();
        if pairs.is_empty() {
            return vec![];
        }
        let k = ((pairs.len() as f64 * rate).round() as usize).clamp(1, pairs.len());
        let mut idx = sample(rng, pairs.len(), k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pairs[i].clone()).collect()
    }

    /// Mints `rent_per_object` per held object to every alive keeper.
    /// Returns the total minted.
    pub fn pay_rent(&self, chain: &mut Chain, policy: &StoragePolicy) -> Result<u64, LedgerError> {
        let mut total = 0;
        for k in self.keepers.values().filter(|k| k.alive) {
            let held = self.stores[&k.id].len() as u64;
            let amount = held * policy.rent_per_object;
            if amount > 0 {
                chain.credit_rent(&k.id, amount)?;
                total += amount;
            }
        }
        Ok(total)
    }

    /// XORs one byte of a keeper's copy. Returns false if there is no copy
    /// or `index` is out of range.
    pub fn corrupt(&mut self, keeper: &str, object: &Hash512, index: usize, mask: u8) -> bool {
        match self.stores.get_mut(keeper).and_then(|s| s.get_mut(object)) {
            Some(b) if index < b.len() && mask != 0 => {
                b[index] ^= mask;
                true
            }
            _ => false,
        }
    }

    /// Deletes a keeper's copy without telling the directory, as a keeper
    /// silently discarding data would.
    pub fn discard_silently(&mut self, keeper: &str, object: &Hash512) -> bool {
        match self.stores.get_mut(keeper).and_then(|s| s.remove(object)) {
            Some(b) => {
                self.keepers.get_mut(keeper).unwrap().used -= b.len() as u64;
                true
            }
            None => false,
        }
    }

    /// Checks capacity accounting and that holders of live objects match
    /// keeper stores.
    pub fn check_invariants(&self) -> Result<(), String> {
        for k in self.keepers.values() {
            let sum: u64 = self.stores[&k.id].values().map(|b| b.len() as u64).sum();
            if sum != k.used {
                return Err(format!("{}: used {} but stores {sum}", k.id, k.used));
            }
            if k.used > k.capacity {
                return Err(format!("{}: over capacity", k.id));
            }
            if !k.alive && !self.stores[&k.id].is_empty() {
                return Err(format!("{}: departed but still stores data", k.id));
            }
        }
        for (id, o) in &self.objects {
            if o.assignment.holders.len() > o.assignment.required {
                return Err(format!("{}: too many holders", id.short()));
            }
            for h in &o.assignment.holders {
                if !self.stores.get(h).is_some_and(|s| s.contains_key(id)) {
                    return Err(format!("{}: holder {h} has no copy", id.short()));
                }
            }
        }
        for (k, s) in &self.stores {
            for id in s.keys() {
                if !self.objects.get(id).is_some_and(|o| o.assignment.holders.contains(k)) {
                    return Err(format!("{k}: stores unassigned {}", id.short()));
                }
            }
        }
        Ok(())
    }
}

impl ModelRegistry for StorageDirectory {
    fn has_model(&self, digest: &Hash512) -> bool {
        self.objects
            .get(digest)
            .is_some_and(|o| o.kind == ObjectKind::Model && !o.assignment.holders.is_empty())
    }
}

#[cfg(test)]
mod tests;
