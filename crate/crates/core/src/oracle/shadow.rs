//! Logical mirror of the object graph, fed only by heap events.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::mutator::Value;
use crate::types::TypeId;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowField {
    Word(u64),
    Child(NodeId),
}

#[derive(Debug, Clone)]
pub struct ShadowNode {
    pub ty: TypeId,
    pub fields: Vec<ShadowField>,
    /// Current canonical address.
    pub addr: u64,
    pub bytes: u64,
    pub released: bool,
    /// Number of collections started before this node was constructed.
    pub born: u64,
}

impl ShadowNode {
    pub fn children(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.fields.iter().filter_map(|f| match *f {
            ShadowField::Child(c) => Some(c),
            ShadowField::Word(_) => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootWord {
    Node(NodeId),
    Raw(u64),
}

#[derive(Debug, Clone)]
pub struct ShadowGraph {
    nodes: Vec<ShadowNode>,
    by_addr: BTreeMap<u64, NodeId>,
    stack: Vec<RootWord>,
    globals: Vec<RootWord>,
    slot_bytes: Vec<u64>,
    epoch: u64,
}

impl ShadowGraph {
    /// `slot_bytes[t]` is the slot size of type `t`.
    pub fn new(slot_bytes: Vec<u64>, global_words: usize) -> Self {
        Self {
            nodes: Vec::new(),
            by_addr: BTreeMap::new(),
            stack: Vec::new(),
            globals: vec![RootWord::Raw(0); global_words],
            slot_bytes,
            epoch: 0,
        }
    }

    pub fn nodes(&self) -> &[ShadowNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &ShadowNode {
        &self.nodes[id]
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn begin_collection(&mut self) {
        self.epoch += 1;
    }

    /// Live node at exactly `addr`.
    pub fn resolve(&self, addr: u64) -> Option<NodeId> {
        self.by_addr.get(&addr).copied()
    }

    /// Live node whose slot contains `word`.
    pub fn canonicalize(&self, word: u64) -> Option<NodeId> {
        let (&base, &id) = self.by_addr.range(..=word).next_back()?;
        (word < base + self.nodes[id].bytes).then_some(id)
    }

    pub fn live_count(&self) -> usize {
        self.by_addr.len()
    }

    pub fn live(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.by_addr.values().copied()
    }

    fn root_word(&self, v: Value) -> Result<RootWord, String> {
        match v {
            Value::Word(w) => Ok(RootWord::Raw(w)),
            Value::Ref(r) => self
                .resolve(r.addr)
                .map(RootWord::Node)
                .ok_or_else(|| format!("root names unknown address {:#x}", r.addr)),
        }
    }

    pub fn construct(&mut self, addr: u64, ty: TypeId, fields: &[Value]) -> Result<NodeId, String> {
        let id = self.nodes.len();
        let mut shadow = Vec::with_capacity(fields.len());
        for f in fields {
            shadow.push(match *f {
                Value::Word(w) => ShadowField::Word(w),
                Value::Ref(r) => {
                    let child = self.resolve(r.addr).ok_or_else(|| format!("construct at {addr:#x} references unknown {:#x}", r.addr))?;
                    if child >= id {
                        return Err(format!("construct at {addr:#x} would close a cycle"));
                    }
                    ShadowField::Child(child)
                }
            });
        }
        if let Some(prev) = self.resolve(addr) {
            return Err(format!("construct at {addr:#x} overlaps live node {prev}"));
        }
        let bytes = *self.slot_bytes.get(ty.index()).ok_or_else(|| format!("unknown type {ty:?}"))?;
        self.nodes.push(ShadowNode { ty, fields: shadow, addr, bytes, released: false, born: self.epoch });
        self.by_addr.insert(addr, id);
        Ok(id)
    }

    pub fn push(&mut self, values: &[Value]) -> Result<(), String> {
        for &v in values {
            let w = self.root_word(v)?;
            self.stack.push(w);
        }
        Ok(())
    }

    pub fn pop(&mut self, count: usize) -> Result<(), String> {
        if count > self.stack.len() {
            return Err(format!("pop of {count} words from a stack of {}", self.stack.len()));
        }
        self.stack.truncate(self.stack.len() - count);
        Ok(())
    }

    pub fn set(&mut self, position: usize, value: Value) -> Result<(), String> {
        let w = self.root_word(value)?;
        *self.stack.get_mut(position).ok_or_else(|| format!("root position {position} out of range"))? = w;
        Ok(())
    }

    pub fn set_global(&mut self, index: usize, value: Value) -> Result<(), String> {
        let w = self.root_word(value)?;
        *self.globals.get_mut(index).ok_or_else(|| format!("global {index} out of range"))? = w;
        Ok(())
    }

    /// Moves the live node at `from` to `to`.
    pub fn rebind(&mut self, from: u64, to: u64) -> Result<NodeId, String> {
        let id = self.by_addr.remove(&from).ok_or_else(|| format!("evacuation of unknown {from:#x}"))?;
        if let Some(other) = self.by_addr.insert(to, id) {
            return Err(format!("evacuation of node {id} onto live node {other} at {to:#x}"));
        }
        self.nodes[id].addr = to;
        Ok(id)
    }

    pub fn release(&mut self, addr: u64) -> Result<NodeId, String> {
        let id = self.by_addr.remove(&addr).ok_or_else(|| format!("release of unknown {addr:#x}"))?;
        self.nodes[id].released = true;
        Ok(id)
    }

    fn root_words(&self) -> impl Iterator<Item = RootWord> + '_ {
        self.stack.iter().chain(self.globals.iter()).copied()
    }

    /// Nodes named by reference-valued root words.
    pub fn precise_roots(&self) -> Vec<NodeId> {
        let mut roots: Vec<NodeId> = self
            .root_words()
            .filter_map(|w| match w {
                RootWord::Node(id) if !self.nodes[id].released => Some(id),
                _ => None,
            })
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots
    }

    /// Nodes whose slot contains any root word, whether typed as a reference or not.
    pub fn conservative_roots(&self) -> Vec<NodeId> {
        let mut roots: Vec<NodeId> = self
            .root_words()
            .filter_map(|w| match w {
                RootWord::Node(id) => self.canonicalize(self.nodes[id].addr),
                RootWord::Raw(w) => self.canonicalize(w),
            })
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots
    }

    pub fn root_word_count(&self) -> usize {
        self.stack.len() + self.globals.len()
    }

    /// Breadth-first closure of `roots` over child edges.
    pub fn closure(&self, roots: &[NodeId]) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<NodeId> = VecDeque::new();
        for &r in roots {
            if !seen[r] {
                seen[r] = true;
                queue.push_back(r);
            }
        }
        while let Some(n) = queue.pop_front() {
            for c in self.nodes[n].children() {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        seen
    }

    /// The same closure by repeated edge relaxation over all nodes until nothing changes.
    pub fn closure_fixpoint(&self, roots: &[NodeId]) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        for &r in roots {
            seen[r] = true;
        }
        loop {
            let mut changed = false;
            for id in (0..self.nodes.len()).rev() {
                if !seen[id] {
                    continue;
                }
                for c in self.nodes[id].children() {
                    if !seen[c] {
                        seen[c] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return seen;
            }
        }
    }

    /// Exact transitive closure from the precise roots.
    pub fn reachable_set(&self) -> BTreeSet<NodeId> {
        let seen = self.closure(&self.precise_roots());
        (0..seen.len()).filter(|&i| seen[i]).collect()
    }

    /// In-degree of every node counting only edges out of unreleased nodes.
    pub fn in_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.nodes.len()];
        for n in self.nodes.iter().filter(|n| !n.released) {
            for c in n.children() {
                deg[c] += 1;
            }
        }
        deg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutator::ObjectRef;

    fn r(addr: u64) -> Value {
        Value::Ref(ObjectRef { addr, ty: TypeId(0) })
    }

    #[test]
    fn construct_records_edges() {
        let mut g = ShadowGraph::new(vec![16], 0);
        let a = g.construct(100, TypeId(0), &[Value::Word(1)]).unwrap();
        let b = g.construct(200, TypeId(0), &[r(100)]).unwrap();
        assert_eq!(g.node(b).fields, vec![ShadowField::Child(a)]);
    }

    #[test]
    fn evacuation_rebinds_address() {
        let mut g = ShadowGraph::new(vec![16], 0);
        let a = g.construct(100, TypeId(0), &[Value::Word(1)]).unwrap();
        assert_eq!(g.rebind(100, 300).unwrap(), a);
        assert_eq!(g.resolve(300), Some(a));
        assert_eq!(g.resolve(100), None);
    }

    #[test]
    fn chain_reachability() {
        let mut g = ShadowGraph::new(vec![16], 0);
        assert!(g.reachable_set().is_empty());
        g.construct(100, TypeId(0), &[Value::Word(0)]).unwrap();
        for i in 1..10u64 {
            g.construct(100 + i * 16, TypeId(0), &[r(100 + (i - 1) * 16)]).unwrap();
        }
        g.push(&[r(100 + 9 * 16)]).unwrap();
        assert_eq!(g.reachable_set().len(), 10);
    }

    #[test]
    fn raw_words_retain_only_conservatively() {
        let mut g = ShadowGraph::new(vec![16], 1);
        let a = g.construct(100, TypeId(0), &[Value::Word(0)]).unwrap();
        g.set_global(0, Value::Word(107)).unwrap();
        assert!(g.reachable_set().is_empty());
        assert_eq!(g.conservative_roots(), vec![a]);
        g.set_global(0, Value::Word(116)).unwrap();
        assert!(g.conservative_roots().is_empty());
    }

    #[test]
    fn unknown_reference_is_a_fault() {
        let mut g = ShadowGraph::new(vec![16], 0);
        assert!(g.construct(100, TypeId(0), &[r(48)]).is_err());
        assert!(g.push(&[r(48)]).is_err());
    }
}
