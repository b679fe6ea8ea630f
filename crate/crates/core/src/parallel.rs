//! Worker team, deferred adjacency updates and atomic-capture worklists.
//!
//! Kernels running over an independent set may only write state they own
//! (the processed vertex, its incident elements, reserved worklist ranges).
//! Updates to any other vertex's adjacency are pushed into the worker's
//! private row of a [`DeferredOps`] buffer, keyed by the owner slot
//! `target % n_workers`, and applied after the sweep by that owner alone.

use std::cell::UnsafeCell;
use std::marker::PhantomData;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard, RwLock};

use crate::error::{Error, Result};
use crate::mesh::{ElementId, Mesh, VertexAdjacency, VertexId};

/// A fixed-size team of workers. One worker runs inline on the caller.
pub struct Workers {
    n: usize,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers").field("n", &self.n).finish()
    }
}

impl Workers {
    pub fn new(n: usize) -> Result<Workers> {
        if n == 0 {
            return Err(Error::InvalidParameter("worker count must be positive".into()));
        }
        let pool = if n > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .thread_name(|i| format!("adapt-worker-{i}"))
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Workers { n, pool })
    }

    pub fn serial() -> Workers {
        Workers { n: 1, pool: None }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Runs `f(worker_id)` once on every worker and waits for all of them.
    pub fn run<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        match &self.pool {
            None => vec![f(0)],
            Some(pool) => pool.broadcast(|ctx| f(ctx.index())),
        }
    }

    /// Dynamic schedule over `0..len`: each worker repeatedly grabs the next
    /// chunk, carrying private state built by `init` across chunks.
    pub fn dynamic<S, I, F>(&self, len: usize, chunk: usize, init: I, body: F) -> Vec<S>
    where
        S: Send,
        I: Fn(usize) -> S + Sync,
        F: Fn(&mut S, usize) + Sync,
    {
        let cursor = DynamicCursor::new(len, chunk);
        self.run(|w| {
            let mut state = init(w);
            while let Some(range) = cursor.next_chunk() {
                for i in range {
                    body(&mut state, i);
                }
            }
            state
        })
    }

    /// Static schedule: worker `w` gets one contiguous block of `0..len`.
    pub fn static_range(&self, len: usize, worker: usize) -> Range<usize> {
        static_block(len, self.n, worker)
    }
}

pub fn static_block(len: usize, n: usize, worker: usize) -> Range<usize> {
    let base = len / n;
    let extra = len % n;
    let start = worker * base + worker.min(extra);
    let end = start + base + usize::from(worker < extra);
    start..end
}

pub struct DynamicCursor {
    next: AtomicUsize,
    len: usize,
    chunk: usize,
}

impl DynamicCursor {
    pub fn new(len: usize, chunk: usize) -> Self {
        DynamicCursor {
            next: AtomicUsize::new(0),
            len,
            chunk: chunk.max(1),
        }
    }

    pub fn next_chunk(&self) -> Option<Range<usize>> {
        let start = self.next.fetch_add(self.chunk, Ordering::Relaxed);
        (start < self.len).then(|| start..(start + self.chunk).min(self.len))
    }
}

/// Shared view of a mutable slice whose slots are partitioned among
/// workers by an external invariant (independent sets, owner slots,
/// reserved ranges).
pub(crate) struct SharedSlice<'a, T> {
    ptr: *mut T,
    len: usize,
    _marker: PhantomData<&'a mut [T]>,
}

unsafe impl<T: Send> Send for SharedSlice<'_, T> {}
unsafe impl<T: Send + Sync> Sync for SharedSlice<'_, T> {}

impl<'a, T> SharedSlice<'a, T> {
    pub(crate) fn new(slice: &'a mut [T]) -> Self {
        SharedSlice {
            ptr: slice.as_mut_ptr(),
            len: slice.len(),
            _marker: PhantomData,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    /// # Safety
    /// No other worker may hold a mutable reference to slot `i`.
    #[inline]
    pub(crate) unsafe fn get(&self, i: usize) -> &T {
        assert!(i < self.len);
        &*self.ptr.add(i)
    }

    /// # Safety
    /// The caller must be the only worker accessing slot `i` for as long
    /// as the reference lives.
    #[inline]
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn get_mut(&self, i: usize) -> &mut T {
        assert!(i < self.len);
        &mut *self.ptr.add(i)
    }
}

/// Deferred edits always name the vertex whose state they change.
pub trait Targeted {
    fn target(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdjacencyEdit {
    AddNeighbour {
        vertex: VertexId,
        neighbour: VertexId,
    },
    RemoveNeighbour {
        vertex: VertexId,
        neighbour: VertexId,
    },
    ReplaceNeighbour {
        vertex: VertexId,
        old: VertexId,
        new: VertexId,
    },
    AddElement {
        vertex: VertexId,
        element: ElementId,
    },
    RemoveElement {
        vertex: VertexId,
        element: ElementId,
    },
}

impl Targeted for AdjacencyEdit {
    fn target(&self) -> usize {
        match *self {
            AdjacencyEdit::AddNeighbour { vertex, .. }
            | AdjacencyEdit::RemoveNeighbour { vertex, .. }
            | AdjacencyEdit::ReplaceNeighbour { vertex, .. }
            | AdjacencyEdit::AddElement { vertex, .. }
            | AdjacencyEdit::RemoveElement { vertex, .. } => vertex,
        }
    }
}

impl AdjacencyEdit {
    /// Applies the edit to the target's adjacency. Edits aimed at a
    /// detached vertex are stale and rejected.
    pub fn apply(&self, adj: &mut VertexAdjacency) -> bool {
        if adj.is_detached() {
            return false;
        }
        match *self {
            AdjacencyEdit::AddNeighbour { neighbour, .. } => adj.add_neighbour(neighbour),
            AdjacencyEdit::RemoveNeighbour { neighbour, .. } => {
                adj.remove_neighbour(neighbour);
            }
            AdjacencyEdit::ReplaceNeighbour { old, new, .. } => adj.replace_neighbour(old, new),
            AdjacencyEdit::AddElement { element, .. } => adj.add_element(element),
            AdjacencyEdit::RemoveElement { element, .. } => {
                adj.remove_element(element);
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommitStats {
    pub applied: usize,
    pub skipped: usize,
}

impl std::ops::AddAssign for CommitStats {
    fn add_assign(&mut self, rhs: Self) {
        self.applied += rhs.applied;
        self.skipped += rhs.skipped;
    }
}

/// `rows[w][o]`: edits deferred by worker `w` for owner slot `o`.
pub struct DeferredOps<E> {
    n_workers: usize,
    rows: Vec<Mutex<Vec<Vec<E>>>>,
}

/// A worker's private row, held for the duration of a sweep.
pub struct DeferRow<'a, E> {
    n_workers: usize,
    lists: MutexGuard<'a, Vec<Vec<E>>>,
    touched: Vec<usize>,
    track: bool,
}

impl<E: Targeted> DeferRow<'_, E> {
    #[inline]
    pub fn push(&mut self, edit: E) {
        let target = edit.target();
        if self.track {
            self.touched.push(target);
        }
        self.lists[target % self.n_workers].push(edit);
    }

    pub fn len(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.iter().all(Vec::is_empty)
    }

    /// Starts recording the targets of subsequent pushes.
    pub fn track_targets(&mut self) {
        self.track = true;
        self.touched.clear();
    }

    pub fn is_touched(&self, v: usize) -> bool {
        self.touched.contains(&v)
    }

    pub fn clear_touched(&mut self) {
        self.touched.clear();
    }
}

impl<E: Targeted + Send> DeferredOps<E> {
    pub fn new(n_workers: usize) -> Self {
        assert!(n_workers > 0);
        DeferredOps {
            n_workers,
            rows: (0..n_workers)
                .map(|_| Mutex::new((0..n_workers).map(|_| Vec::new()).collect()))
                .collect(),
        }
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn owner_of(&self, target: usize) -> usize {
        target % self.n_workers
    }

    pub fn row(&self, worker: usize) -> DeferRow<'_, E> {
        DeferRow {
            n_workers: self.n_workers,
            lists: self.rows[worker].lock().expect("deferred row poisoned"),
            touched: Vec::new(),
            track: false,
        }
    }

    pub fn defer(&self, worker: usize, edit: E) {
        self.row(worker).push(edit);
    }

    /// Number of edits in `rows[worker][owner]`.
    pub fn slot_len(&self, worker: usize, owner: usize) -> usize {
        self.rows[worker].lock().expect("deferred row poisoned")[owner].len()
    }

    pub fn pending(&self) -> usize {
        self.rows
            .iter()
            .map(|r| {
                r.lock()
                    .expect("deferred row poisoned")
                    .iter()
                    .map(Vec::len)
                    .sum::<usize>()
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pending() == 0
    }

    /// Every owner `o` applies `rows[w][o]` for `w = 0..n` in order. Each
    /// target slot is therefore mutated by exactly one worker. `apply`
    /// receives the owner id and returns false for a stale edit.
    pub fn commit<T, F>(&mut self, workers: &Workers, slots: &mut [T], apply: F) -> CommitStats
    where
        T: Send + Sync,
        F: Fn(usize, &mut T, &E) -> bool + Sync,
    {
        assert_eq!(workers.count(), self.n_workers, "worker team does not match buffer");
        let n = self.n_workers;
        // Transpose rows into per-owner inboxes; this only moves Vec headers.
        let mut inboxes: Vec<Vec<Vec<E>>> = (0..n).map(|_| Vec::with_capacity(n)).collect();
        for row in &mut self.rows {
            let row = row.get_mut().expect("deferred row poisoned");
            for (owner, list) in row.iter_mut().enumerate() {
                inboxes[owner].push(std::mem::take(list));
            }
        }
        if inboxes.iter().all(|i| i.iter().all(Vec::is_empty)) {
            return CommitStats::default();
        }
        let inboxes: Vec<Mutex<Vec<Vec<E>>>> = inboxes.into_iter().map(Mutex::new).collect();
        let shared = SharedSlice::new(slots);
        let stats = workers.run(|owner| {
            let mut inbox = inboxes[owner].lock().expect("inbox poisoned");
            let mut stats = CommitStats::default();
            for list in inbox.iter_mut() {
                for edit in list.drain(..) {
                    let t = edit.target();
                    if t >= shared.len() {
                        stats.skipped += 1;
                        continue;
                    }
                    debug_assert_eq!(t % n, owner);
                    // SAFETY: target t is only ever routed to owner t % n, so
                    // no other worker touches this slot during the commit.
                    let slot = unsafe { shared.get_mut(t) };
                    if apply(owner, slot, &edit) {
                        stats.applied += 1;
                    } else {
                        stats.skipped += 1;
                    }
                }
            }
            stats
        });
        // Hand the (now empty) allocations back to their rows.
        for (owner, inbox) in inboxes.into_iter().enumerate() {
            for (w, list) in inbox.into_inner().expect("inbox poisoned").into_iter().enumerate() {
                self.rows[w].get_mut().expect("deferred row poisoned")[owner] = list;
            }
        }
        stats.into_iter().fold(CommitStats::default(), |mut a, b| {
            a += b;
            a
        })
    }
}

/// Commits buffered adjacency edits into the mesh.
pub fn commit_deferred(buffer: &mut DeferredOps<AdjacencyEdit>, workers: &Workers, mesh: &mut Mesh) -> CommitStats {
    buffer.commit(workers, &mut mesh.adjacency, |_, adj, edit| edit.apply(adj))
}

struct SyncCell<T>(UnsafeCell<T>);

unsafe impl<T: Send> Sync for SyncCell<T> {}

/// Global append-only list. Workers reserve disjoint ranges with a single
/// fetch-and-add on the shared size counter.
pub struct Worklist<T> {
    storage: RwLock<Vec<SyncCell<T>>>,
    size: AtomicUsize,
}

impl<T: Copy + Default + Send> Worklist<T> {
    pub fn with_capacity(capacity: usize) -> Self {
        Worklist {
            storage: RwLock::new((0..capacity).map(|_| SyncCell(UnsafeCell::new(T::default()))).collect()),
            size: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.size.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.storage.read().expect("worklist poisoned").len()
    }

    /// Atomically captures the current size and advances it by `count`.
    pub fn reserve(&self, count: usize) -> Reservation<'_, T> {
        let base = self.size.fetch_add(count, Ordering::AcqRel);
        let end = base + count;
        if end > self.capacity() {
            let mut storage = self.storage.write().expect("worklist poisoned");
            if end > storage.len() {
                let grown = end.max(2 * storage.len());
                storage.resize_with(grown, || SyncCell(UnsafeCell::new(T::default())));
            }
        }
        Reservation {
            list: self,
            range: base..end,
        }
    }

    /// Reserves room for `items` and copies them in; returns the base index.
    pub fn push_slice(&self, items: &[T]) -> usize {
        let r = self.reserve(items.len());
        let base = r.base();
        r.fill(items);
        base
    }

    pub fn into_vec(self) -> Vec<T> {
        let len = self.size.into_inner();
        let mut storage = self.storage.into_inner().expect("worklist poisoned");
        storage.truncate(len);
        storage.into_iter().map(|c| c.0.into_inner()).collect()
    }
}

/// A reserved, not yet filled range of a [`Worklist`].
pub struct Reservation<'a, T> {
    list: &'a Worklist<T>,
    range: Range<usize>,
}

impl<T: Copy> Reservation<'_, T> {
    pub fn base(&self) -> usize {
        self.range.start
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn fill(self, items: &[T]) {
        assert_eq!(items.len(), self.range.len(), "fill must match the reservation");
        let storage = self.list.storage.read().expect("worklist poisoned");
        for (cell, item) in storage[self.range.clone()].iter().zip(items) {
            // SAFETY: the range came from fetch_add, so it is disjoint from
            // every other reservation; growth needs the write lock we exclude.
            unsafe { *cell.0.get() = *item };
        }
    }
}
