use catalpa::{FrameToken, Heap, HeapConfig, Mutator, ObjectRef, RefMask, TypeId, Value, Verifier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Driver {
    pub heap: Heap,
    pub verifier: Verifier,
    pub rng: ChaCha8Rng,
    types: Vec<(TypeId, usize, RefMask)>,
    frames: Vec<(FrameToken, Vec<Value>)>,
}

impl Driver {
    pub fn new(seed: u64, nursery: usize) -> Self {
        let config = HeapConfig::default().with_nursery(nursery).with_reserve(64 << 20);
        let mut heap = Heap::new(config).unwrap();
        let mut types = Vec::new();
        for (slots, mask) in [(0, 0u64), (1, 0), (2, 0b01), (2, 0b11), (3, 0b101), (5, 0b11111), (8, 0b1000_0001)] {
            let name = format!("T{slots}_{mask:b}");
            let ty = heap.register_type(&name, slots, RefMask(mask)).unwrap();
            types.push((ty, slots, RefMask(mask)));
        }
        let verifier = Verifier::new();
        verifier.attach(&mut heap);
        Self { heap, verifier, rng: ChaCha8Rng::seed_from_u64(seed), types, frames: Vec::new() }
    }

    fn rooted(&self) -> Vec<ObjectRef> {
        self.frames.iter().flat_map(|(_, vs)| vs.iter().filter_map(|v| v.as_ref())).collect()
    }

    fn pick_ref(&mut self) -> Option<ObjectRef> {
        let rooted = self.rooted();
        if rooted.is_empty() {
            return None;
        }
        let mut cur = rooted[self.rng.gen_range(0..rooted.len())];
        // wander down a few edges
        for _ in 0..self.rng.gen_range(0..4) {
            let (_, slots, mask) = self.types[cur.ty.index()];
            let refs: Vec<usize> = mask.iter().filter(|&s| s < slots).collect();
            if refs.is_empty() {
                break;
            }
            let slot = refs[self.rng.gen_range(0..refs.len())];
            cur = self.heap.read_ref(cur, slot).unwrap();
        }
        Some(cur)
    }

    pub fn new_object(&mut self) -> ObjectRef {
        loop {
            let (ty, slots, mask) = self.types[self.rng.gen_range(0..self.types.len())];
            let mut fields = Vec::with_capacity(slots);
            let mut ok = true;
            for s in 0..slots {
                if mask.contains(s) {
                    match self.pick_ref() {
                        Some(r) => fields.push(Value::Ref(r)),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                } else {
                    fields.push(Value::Word(self.rng.gen_range(0..1000)));
                }
            }
            if ok {
                return self.heap.construct(ty, &fields).unwrap();
            }
        }
    }

    pub fn step(&mut self) {
        match self.rng.gen_range(0..100) {
            0..=29 => {
                let n = self.rng.gen_range(1..4);
                let token = self.heap.root_push(&vec![Value::Word(0); n]).unwrap();
                self.frames.push((token, vec![Value::Word(0); n]));
                for i in 0..n {
                    let obj = Value::Ref(self.new_object());
                    self.heap.root_set(token, i, obj).unwrap();
                    self.frames.last_mut().unwrap().1[i] = obj;
                }
            }
            30..=44 => {
                if let Some((token, _)) = self.frames.pop() {
                    self.heap.root_pop(token).unwrap();
                }
            }
            45..=54 => {
                if let Some(i) = (!self.frames.is_empty()).then(|| self.rng.gen_range(0..self.frames.len())) {
                    let idx = self.rng.gen_range(0..self.frames[i].1.len());
                    let value = match self.rng.gen_range(0..4) {
                        0 => Value::Word(self.rng.gen()),
                        1 => match self.pick_ref() {
                            // an interior word aliasing a live object
                            Some(r) => Value::Word(r.addr + 8 * self.rng.gen_range(0..2)),
                            None => Value::Word(0),
                        },
                        _ => Value::Ref(self.new_object()),
                    };
                    let token = self.frames[i].0;
                    self.heap.root_set(token, idx, value).unwrap_or_else(|e| panic!("{e:?} {idx} {token:?} {}", self.frames.len()));
                    self.frames[i].1[idx] = value;
                }
            }
            55..=59 => {
                let idx = self.rng.gen_range(0..4);
                let value = match self.pick_ref() {
                    Some(r) if self.rng.gen_bool(0.7) => Value::Ref(r),
                    _ => Value::Word(0),
                };
                self.heap.set_global(idx, value).unwrap();
            }
            _ => {
                self.new_object();
            }
        }
    }

    pub fn run(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }
}
