//! Allocation-profile analogues of the benchmark programs.
//!
//! Every kernel is deterministic for a given seed: a task's size is a fixed
//! iteration count derived from the target task time, never from the clock.
//! Objects held across an allocation are kept in a root frame, because an
//! allocation may collect and unrooted young objects move or die.

use std::fmt;

use catalpa::{FrameToken, HeapError, Mutator, ObjectRef, RefMask, TypeId, Value};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Nbody,
    Raytracer,
    Db,
    Server,
    Stress,
}

impl Kind {
    /// The kinds a server run draws its tasks from.
    pub const SERVED: [Kind; 3] = [Kind::Nbody, Kind::Raytracer, Kind::Db];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Nbody => "nbody",
            Kind::Raytracer => "raytracer",
            Kind::Db => "db",
            Kind::Server => "server",
            Kind::Stress => "stress",
        }
    }

    /// Iterations of the kernel's inner step per millisecond of target task time.
    fn steps_per_ms(self) -> f64 {
        match self {
            Kind::Nbody => 220.0,
            Kind::Raytracer => 700.0,
            Kind::Db => 220.0,
            Kind::Server => 0.0,
            Kind::Stress => 2000.0,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub kind: Kind,
    pub tasks: usize,
    pub seed: u64,
    /// Target task time in milliseconds; sets each task's iteration count.
    pub task_ms: f64,
}

impl Workload {
    pub fn new(kind: Kind, tasks: usize, seed: u64) -> Self {
        Self { kind, tasks, seed, task_ms: 5.0 }
    }

    pub fn with_task_ms(mut self, task_ms: f64) -> Self {
        self.task_ms = task_ms;
        self
    }

    pub fn steps(&self, kind: Kind) -> usize {
        ((kind.steps_per_ms() * self.task_ms).round() as usize).max(1)
    }
}

/// Type ids for every kernel. All kernels register the same set so uniform and
/// mixed runs see identical size classes.
#[derive(Debug, Clone, Copy)]
pub struct Types {
    pub nil: TypeId,
    pub vec3: TypeId,
    pub body: TypeId,
    pub cons: TypeId,
    pub ray: TypeId,
    pub sphere: TypeId,
    pub hit: TypeId,
    pub color: TypeId,
    pub text: TypeId,
    pub record: TypeId,
    pub tree: TypeId,
    pub row: TypeId,
    pub query: TypeId,
    pub stress: [TypeId; 6],
}

const STRESS_SHAPES: [(usize, u64); 6] = [(0, 0), (1, 0), (2, 0b01), (2, 0b11), (3, 0b101), (6, 0b10_0111)];

impl Types {
    pub fn register<M: Mutator>(m: &mut M) -> Result<Self, HeapError> {
        let refs = |slots: &[usize]| RefMask::from_slots(slots);
        let mut stress = [TypeId(0); 6];
        let types = Types {
            nil: m.register_type("Nil", 0, RefMask::EMPTY)?,
            vec3: m.register_type("Vec3", 3, RefMask::EMPTY)?,
            body: m.register_type("Body", 3, refs(&[0, 1]))?,
            cons: m.register_type("Cons", 2, refs(&[0, 1]))?,
            ray: m.register_type("Ray", 2, refs(&[0, 1]))?,
            sphere: m.register_type("Sphere", 3, refs(&[0, 2]))?,
            hit: m.register_type("Hit", 4, refs(&[1, 2, 3]))?,
            color: m.register_type("Color", 3, RefMask::EMPTY)?,
            text: m.register_type("Text", 3, RefMask::EMPTY)?,
            record: m.register_type("Record", 4, refs(&[1]))?,
            tree: m.register_type("Tree", 4, refs(&[1, 2, 3]))?,
            row: m.register_type("Row", 3, RefMask::EMPTY)?,
            query: m.register_type("Query", 3, RefMask::EMPTY)?,
            stress: {
                for (i, &(slots, mask)) in STRESS_SHAPES.iter().enumerate() {
                    stress[i] = m.register_type(&format!("Stress{i}"), slots, RefMask(mask))?;
                }
                stress
            },
        };
        m.freeze();
        Ok(types)
    }
}

// Global root slots.
const G_NIL: usize = 0;
const G_BODIES: usize = 1;
const G_SCENE: usize = 6;
const G_DB: usize = 7;

const BODIES: usize = 5;
const DB_KEYS: u64 = 512;
const ROW_BATCH: usize = 16;
const MAX_STRESS_FRAMES: usize = 48;

/// A root frame of fixed width used to pin intermediate objects.
struct Scratch {
    frame: FrameToken,
}

impl Scratch {
    fn push<M: Mutator>(m: &mut M, width: usize) -> Result<Self, HeapError> {
        Ok(Self { frame: m.root_push(&vec![Value::Word(0); width])? })
    }

    fn keep<M: Mutator>(&self, m: &mut M, slot: usize, obj: ObjectRef) -> Result<ObjectRef, HeapError> {
        m.root_set(self.frame, slot, obj.into())?;
        Ok(obj)
    }

    /// Allocates with `f` and pins the result in `slot`.
    fn make<M: Mutator>(
        &self,
        m: &mut M,
        slot: usize,
        f: impl FnOnce(&mut M) -> Result<ObjectRef, HeapError>,
    ) -> Result<ObjectRef, HeapError> {
        let obj = f(m)?;
        self.keep(m, slot, obj)
    }

    fn pop<M: Mutator>(self, m: &mut M) -> Result<(), HeapError> {
        m.root_pop(self.frame)
    }
}

type V3 = [f64; 3];

fn read_v3<M: Mutator>(m: &M, v: ObjectRef) -> Result<V3, HeapError> {
    Ok([m.read_f64(v, 0)?, m.read_f64(v, 1)?, m.read_f64(v, 2)?])
}

fn new_v3<M: Mutator>(m: &mut M, ty: TypeId, v: V3) -> Result<ObjectRef, HeapError> {
    m.construct(ty, &[v[0].into(), v[1].into(), v[2].into()])
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: V3, k: f64) -> V3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Live kernel state for one heap.
pub struct World {
    pub types: Types,
    nil: ObjectRef,
    bodies: Option<[ObjectRef; BODIES]>,
    scene: Option<ObjectRef>,
    db: Option<ObjectRef>,
    db_version: u64,
    stress: Vec<(FrameToken, Vec<Value>)>,
    rng: ChaCha8Rng,
    pub checksum: u64,
}

impl World {
    /// Registers types and builds the long-lived state each kind in `kinds` needs.
    pub fn new<M: Mutator>(m: &mut M, kinds: &[Kind], seed: u64) -> Result<Self, HeapError> {
        let types = Types::register(m)?;
        let nil = m.construct(types.nil, &[])?;
        m.set_global(G_NIL, nil.into())?;
        let mut world = World {
            types,
            nil,
            bodies: None,
            scene: None,
            db: None,
            db_version: 0,
            stress: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            checksum: 0,
        };
        let needs = |k: Kind| kinds.contains(&k) || (kinds.contains(&Kind::Server) && Kind::SERVED.contains(&k));
        if needs(Kind::Nbody) {
            world.init_bodies(m)?;
        }
        if needs(Kind::Raytracer) {
            world.init_scene(m)?;
        }
        if needs(Kind::Db) {
            world.init_db(m)?;
        }
        Ok(world)
    }

    /// The shared empty object, kept in global 0.
    pub fn nil(&self) -> ObjectRef {
        self.nil
    }

    /// Runs one task of `kind` with `steps` iterations.
    pub fn task<M: Mutator>(&mut self, m: &mut M, kind: Kind, steps: usize) -> Result<(), HeapError> {
        match kind {
            Kind::Nbody => self.nbody(m, steps),
            Kind::Raytracer => self.raytrace(m, steps),
            Kind::Db => self.db(m, steps),
            Kind::Stress => self.stress(m, steps),
            Kind::Server => unreachable!("server tasks are resolved to a served kind before running"),
        }
    }

    // ---- nbody ------------------------------------------------------------------

    fn init_bodies<M: Mutator>(&mut self, m: &mut M) -> Result<(), HeapError> {
        let t = self.types;
        let mut bodies = [self.nil; BODIES];
        for (i, slot) in bodies.iter_mut().enumerate() {
            let angle = i as f64 * 1.3;
            let s = Scratch::push(m, 2)?;
            let pos = s.make(m, 0, |m| new_v3(m, t.vec3, [angle.cos() * (i + 1) as f64, angle.sin() * (i + 1) as f64, 0.1 * i as f64]))?;
            let vel = s.make(m, 1, |m| new_v3(m, t.vec3, [-angle.sin() * 0.5, angle.cos() * 0.5, 0.0]))?;
            let mass = if i == 0 { 40.0 } else { 0.01 * (i + 1) as f64 };
            let body = m.construct(t.body, &[pos.into(), vel.into(), mass.into()])?;
            m.set_global(G_BODIES + i, body.into())?;
            s.pop(m)?;
            *slot = body;
        }
        self.bodies = Some(bodies);
        Ok(())
    }

    fn nbody<M: Mutator>(&mut self, m: &mut M, steps: usize) -> Result<(), HeapError> {
        let t = self.types;
        let dt = 0.001;
        let mut bodies = self.bodies.expect("nbody state");
        // slots 0..5 positions, 5..10 velocities
        let s = Scratch::push(m, 2 * BODIES)?;
        let mut pos = [self.nil; BODIES];
        let mut vel = [self.nil; BODIES];
        let mut mass = [0.0; BODIES];
        for i in 0..BODIES {
            pos[i] = s.make(m, i, |m| m.read_ref(bodies[i], 0))?;
            vel[i] = s.make(m, BODIES + i, |m| m.read_ref(bodies[i], 1))?;
            mass[i] = m.read_f64(bodies[i], 2)?;
        }
        for _ in 0..steps {
            for i in 0..BODIES {
                for j in i + 1..BODIES {
                    let d = new_v3(m, t.vec3, sub(read_v3(m, pos[i])?, read_v3(m, pos[j])?))?;
                    let dv = read_v3(m, d)?;
                    let dist2 = dot(dv, dv) + 0.01;
                    let mag = dt / (dist2 * dist2.sqrt());
                    let di = new_v3(m, t.vec3, scale(dv, mass[j] * mag))?;
                    let di = read_v3(m, di)?;
                    vel[i] = s.make(m, BODIES + i, |m| new_v3(m, t.vec3, sub(read_v3(m, vel[i])?, di)))?;
                    let dj = new_v3(m, t.vec3, scale(dv, mass[i] * mag))?;
                    let dj = read_v3(m, dj)?;
                    vel[j] = s.make(m, BODIES + j, |m| new_v3(m, t.vec3, add(read_v3(m, vel[j])?, dj)))?;
                }
            }
            for i in 0..BODIES {
                let step = new_v3(m, t.vec3, scale(read_v3(m, vel[i])?, dt))?;
                let step = read_v3(m, step)?;
                pos[i] = s.make(m, i, |m| new_v3(m, t.vec3, add(read_v3(m, pos[i])?, step)))?;
            }
        }
        for i in 0..BODIES {
            bodies[i] = m.construct(t.body, &[pos[i].into(), vel[i].into(), mass[i].into()])?;
            m.set_global(G_BODIES + i, bodies[i].into())?;
        }
        s.pop(m)?;
        self.bodies = Some(bodies);
        self.checksum = self.checksum.wrapping_add(read_v3(m, m.read_ref(bodies[1], 0)?)?[0].to_bits());
        Ok(())
    }

    // ---- raytracer --------------------------------------------------------------

    fn init_scene<M: Mutator>(&mut self, m: &mut M) -> Result<(), HeapError> {
        let t = self.types;
        let s = Scratch::push(m, 3)?;
        let mut list = s.keep(m, 0, self.nil)?;
        for i in 0..4 {
            let x = i as f64 * 1.5 - 2.25;
            let center = s.make(m, 1, |m| new_v3(m, t.vec3, [x, 0.2 * i as f64, 5.0 + i as f64]))?;
            let color = s.make(m, 2, |m| new_v3(m, t.color, [0.2 * i as f64, 0.5, 1.0 - 0.2 * i as f64]))?;
            let sphere = m.construct(t.sphere, &[center.into(), (0.6 + 0.1 * i as f64).into(), color.into()])?;
            s.keep(m, 1, sphere)?;
            list = s.make(m, 0, |m| m.construct(t.cons, &[sphere.into(), list.into()]))?;
        }
        m.set_global(G_SCENE, list.into())?;
        s.pop(m)?;
        self.scene = Some(list);
        Ok(())
    }

    fn raytrace<M: Mutator>(&mut self, m: &mut M, pixels: usize) -> Result<(), HeapError> {
        let t = self.types;
        let mut spheres = Vec::new();
        let mut cur = self.scene.expect("raytracer state");
        while cur.ty == t.cons {
            spheres.push(m.read_ref(cur, 0)?);
            cur = m.read_ref(cur, 1)?;
        }
        // pin spheres, their centers and colors for the task
        let mut pinned: Vec<Value> = Vec::new();
        let mut geometry = Vec::new();
        for &sp in &spheres {
            let center = m.read_ref(sp, 0)?;
            pinned.extend([Value::Ref(sp), Value::Ref(center), Value::Ref(m.read_ref(sp, 2)?)]);
            geometry.push((read_v3(m, center)?, m.read_f64(sp, 1)?));
        }
        let pin = m.root_push(&pinned)?;
        // 0 origin, 1 dir, 2 ray, 3 point, 4 normal, 5 best hit, 6 row
        let s = Scratch::push(m, 7)?;
        let mut row = s.keep(m, 6, self.nil)?;
        let width = 64usize;
        let mut acc = 0.0;
        for p in 0..pixels {
            let (px, py) = ((p % width) as f64 / width as f64 - 0.5, ((p / width) % width) as f64 / width as f64 - 0.5);
            let origin = s.make(m, 0, |m| new_v3(m, t.vec3, [0.0, 0.0, 0.0]))?;
            let norm = (px * px + py * py + 1.0).sqrt();
            let dir = s.make(m, 1, |m| new_v3(m, t.vec3, [px / norm, py / norm, 1.0 / norm]))?;
            let ray = s.make(m, 2, |m| m.construct(t.ray, &[origin.into(), dir.into()]))?;
            let mut best: Option<(f64, ObjectRef)> = None;
            for (k, &(center, radius)) in geometry.iter().enumerate() {
                let o = read_v3(m, m.read_ref(ray, 0)?)?;
                let d = read_v3(m, m.read_ref(ray, 1)?)?;
                let oc = sub(o, center);
                let b = dot(oc, d);
                let disc = b * b - (dot(oc, oc) - radius * radius);
                let tt = if disc > 0.0 { -b - disc.sqrt() } else { f64::INFINITY };
                let hit_t = if tt.is_finite() && tt > 0.0 { tt } else { 50.0 + k as f64 };
                let point = s.make(m, 3, |m| new_v3(m, t.vec3, add(o, scale(d, hit_t))))?;
                let n = sub(read_v3(m, point)?, center);
                let normal = s.make(m, 4, |m| new_v3(m, t.vec3, scale(n, 1.0 / radius)))?;
                let hit = m.construct(t.hit, &[hit_t.into(), point.into(), normal.into(), spheres[k].into()])?;
                if best.is_none_or(|(bt, _)| hit_t < bt) {
                    best = Some((hit_t, s.keep(m, 5, hit)?));
                }
            }
            let (_, hit) = best.expect("scene is not empty");
            let normal = read_v3(m, m.read_ref(hit, 2)?)?;
            let base = read_v3(m, m.read_ref(m.read_ref(hit, 3)?, 2)?)?;
            let shade = normal[2].abs().min(1.0);
            let color = m.construct(t.color, &[(base[0] * shade).into(), (base[1] * shade).into(), (base[2] * shade).into()])?;
            acc += m.read_f64(color, 1)?;
            row = s.make(m, 6, |m| m.construct(t.cons, &[color.into(), row.into()]))?;
            if p % width == width - 1 {
                row = s.keep(m, 6, self.nil)?;
            }
        }
        s.pop(m)?;
        m.root_pop(pin)?;
        self.checksum = self.checksum.wrapping_add(acc.to_bits());
        Ok(())
    }

    // ---- db -----------------------------------------------------------------------

    fn text<M: Mutator>(&self, m: &mut M, key: u64, version: u64) -> Result<ObjectRef, HeapError> {
        m.construct(self.types.text, &[8u64.into(), (key * 2654435761).into(), version.into()])
    }

    fn init_db<M: Mutator>(&mut self, m: &mut M) -> Result<(), HeapError> {
        let s = Scratch::push(m, 1)?;
        let root = self.build_tree(m, 0, DB_KEYS)?;
        s.keep(m, 0, root)?;
        m.set_global(G_DB, root.into())?;
        s.pop(m)?;
        self.db = Some(root);
        Ok(())
    }

    /// Balanced tree over keys `lo..hi`. The result is unrooted.
    fn build_tree<M: Mutator>(&mut self, m: &mut M, lo: u64, hi: u64) -> Result<ObjectRef, HeapError> {
        if lo >= hi {
            return Ok(self.nil);
        }
        let mid = lo + (hi - lo) / 2;
        let s = Scratch::push(m, 3)?;
        let left = self.build_tree(m, lo, mid)?;
        s.keep(m, 0, left)?;
        let right = self.build_tree(m, mid + 1, hi)?;
        s.keep(m, 1, right)?;
        let name = self.text(m, mid, 0)?;
        s.keep(m, 2, name)?;
        let record = m.construct(self.types.record, &[mid.into(), name.into(), (mid * 100).into(), 0u64.into()])?;
        s.keep(m, 2, record)?;
        let node = m.construct(self.types.tree, &[mid.into(), record.into(), left.into(), right.into()])?;
        s.pop(m)?;
        Ok(node)
    }

    fn db<M: Mutator>(&mut self, m: &mut M, ops: usize) -> Result<(), HeapError> {
        for _ in 0..ops {
            let key = self.rng.gen_range(0..DB_KEYS);
            if self.rng.gen_range(0..100) < 4 {
                self.db_update(m, key)?;
            } else {
                self.db_query(m, key)?;
            }
        }
        Ok(())
    }

    fn db_query<M: Mutator>(&mut self, m: &mut M, lo: u64) -> Result<(), HeapError> {
        let t = self.types;
        let s = Scratch::push(m, 3)?;
        let query = s.make(m, 0, |m| m.construct(t.query, &[lo.into(), (lo + ROW_BATCH as u64).into(), (ROW_BATCH as u64).into()]))?;
        let lo = m.read_word(query, 0)?;
        let hi = m.read_word(query, 1)?;
        // In-order walk of keys in [lo, hi); reads only, no allocation.
        let mut rows = Vec::with_capacity(ROW_BATCH);
        let mut stack = Vec::new();
        let mut cur = self.db.expect("db state");
        loop {
            while cur.ty == t.tree {
                let key = m.read_word(cur, 0)?;
                if key >= lo {
                    stack.push(cur);
                    cur = m.read_ref(cur, 2)?;
                } else {
                    cur = m.read_ref(cur, 3)?;
                }
            }
            let Some(node) = stack.pop() else { break };
            let key = m.read_word(node, 0)?;
            if key >= hi {
                break;
            }
            let record = m.read_ref(node, 1)?;
            let name = m.read_ref(record, 1)?;
            rows.push([key, m.read_word(record, 2)?, m.read_word(name, 1)?]);
            cur = m.read_ref(node, 3)?;
        }
        let mut list = s.keep(m, 1, self.nil)?;
        let mut total = 0u64;
        for r in rows.iter().rev() {
            let row = m.construct(t.row, &[r[0].into(), r[1].into(), r[2].into()])?;
            s.keep(m, 2, row)?;
            total = total.wrapping_add(m.read_word(row, 1)?);
            let key = self.text(m, r[0], 1)?;
            total = total.wrapping_add(m.read_word(key, 1)?);
            list = s.make(m, 1, |m| m.construct(t.cons, &[row.into(), list.into()]))?;
        }
        s.pop(m)?;
        self.checksum = self.checksum.wrapping_add(total);
        Ok(())
    }

    /// Replaces the record for `key`, copying the path from the root.
    fn db_update<M: Mutator>(&mut self, m: &mut M, key: u64) -> Result<(), HeapError> {
        let t = self.types;
        let mut path = Vec::new();
        let mut cur = self.db.expect("db state");
        while cur.ty == t.tree {
            path.push(cur);
            let k = m.read_word(cur, 0)?;
            if k == key {
                break;
            }
            cur = m.read_ref(cur, if key < k { 2 } else { 3 })?;
        }
        // pin the old path and its children while the copy is built
        let mut pinned = Vec::with_capacity(path.len() * 3);
        for &node in &path {
            pinned.extend([Value::Ref(node), m.read_field(node, 2)?, m.read_field(node, 3)?]);
        }
        let pin = m.root_push(&pinned)?;
        let s = Scratch::push(m, 2)?;
        self.db_version += 1;
        let name = s.make(m, 0, |m| self.text(m, key, self.db_version))?;
        let target = *path.last().expect("key is present");
        let old = m.read_ref(target, 1)?;
        let balance = m.read_word(old, 2)?.wrapping_add(self.db_version % 7);
        let record = s.make(m, 0, |m| m.construct(t.record, &[key.into(), name.into(), balance.into(), self.db_version.into()]))?;
        let (left, right) = (m.read_field(target, 2)?, m.read_field(target, 3)?);
        let mut child = s.make(m, 1, |m| m.construct(t.tree, &[key.into(), record.into(), left, right]))?;
        for &node in path.iter().rev().skip(1) {
            let k = m.read_word(node, 0)?;
            let rec = m.read_field(node, 1)?;
            let (left, right) = if key < k {
                (Value::Ref(child), m.read_field(node, 3)?)
            } else {
                (m.read_field(node, 2)?, Value::Ref(child))
            };
            child = s.make(m, 1, |m| m.construct(t.tree, &[k.into(), rec, left, right]))?;
        }
        m.set_global(G_DB, child.into())?;
        s.pop(m)?;
        m.root_pop(pin)?;
        self.db = Some(child);
        Ok(())
    }

    // ---- stress -------------------------------------------------------------------

    fn rooted_refs(&self) -> impl Iterator<Item = ObjectRef> + '_ {
        self.stress.iter().flat_map(|(_, vs)| vs.iter().filter_map(|v| v.as_ref()))
    }

    fn stress_pick<M: Mutator>(&mut self, m: &M) -> Result<ObjectRef, HeapError> {
        let count = self.rooted_refs().count();
        if count == 0 {
            return Ok(self.nil);
        }
        let n = self.rng.gen_range(0..count);
        let mut cur = self.rooted_refs().nth(n).expect("index in range");
        for _ in 0..self.rng.gen_range(0..4) {
            let Some(k) = self.types.stress.iter().position(|&ty| ty == cur.ty) else { break };
            let (slots, mask) = STRESS_SHAPES[k];
            let refs: Vec<usize> = RefMask(mask).iter().filter(|&s| s < slots).collect();
            if refs.is_empty() {
                break;
            }
            cur = m.read_ref(cur, refs[self.rng.gen_range(0..refs.len())])?;
        }
        Ok(cur)
    }

    fn stress_object<M: Mutator>(&mut self, m: &mut M) -> Result<ObjectRef, HeapError> {
        let k = self.rng.gen_range(0..STRESS_SHAPES.len());
        let (slots, mask) = STRESS_SHAPES[k];
        let mut fields = Vec::with_capacity(slots);
        for s in 0..slots {
            if RefMask(mask).contains(s) {
                fields.push(Value::Ref(self.stress_pick(m)?));
            } else {
                fields.push(Value::Word(self.rng.gen_range(0..1 << 20)));
            }
        }
        m.construct(self.types.stress[k], &fields)
    }

    /// One random mutation of the stress DAG: build, root, re-root, drop or churn.
    pub fn stress_step<M: Mutator>(&mut self, m: &mut M) -> Result<(), HeapError> {
        match self.rng.gen_range(0..100) {
            0..=24 if self.stress.len() < MAX_STRESS_FRAMES => {
                let n = self.rng.gen_range(1..5);
                let token = m.root_push(&vec![Value::Word(0); n])?;
                self.stress.push((token, vec![Value::Word(0); n]));
                for i in 0..n {
                    let obj = Value::Ref(self.stress_object(m)?);
                    m.root_set(token, i, obj)?;
                    self.stress.last_mut().expect("just pushed").1[i] = obj;
                }
            }
            0..=39 => {
                if let Some((token, _)) = self.stress.pop() {
                    m.root_pop(token)?;
                }
            }
            40..=54 if !self.stress.is_empty() => {
                let f = self.rng.gen_range(0..self.stress.len());
                let i = self.rng.gen_range(0..self.stress[f].1.len());
                let value = match self.rng.gen_range(0..8) {
                    // a random word that almost never aliases the heap
                    0 => Value::Word(self.rng.gen()),
                    // an interior word that does
                    1 => Value::Word(self.stress_pick(m)?.addr + 8),
                    2..=4 => Value::Ref(self.stress_pick(m)?),
                    _ => Value::Ref(self.stress_object(m)?),
                };
                m.root_set(self.stress[f].0, i, value)?;
                self.stress[f].1[i] = value;
            }
            55..=59 => {
                let idx = 8 + self.rng.gen_range(0..8);
                let value = if self.rng.gen_bool(0.7) { Value::Ref(self.stress_pick(m)?) } else { Value::Word(0) };
                m.set_global(idx, value)?;
            }
            _ => {
                self.stress_object(m)?;
            }
        }
        Ok(())
    }

    fn stress<M: Mutator>(&mut self, m: &mut M, steps: usize) -> Result<(), HeapError> {
        for _ in 0..steps {
            self.stress_step(m)?;
        }
        Ok(())
    }
}
