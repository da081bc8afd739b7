//! Portable kernels, each partitionable over its output dimension.
//!
//! * INT8 GEMM splits along N (output columns), in tiles of [`GEMM_TILE_N`].
//! * Q4_0 GEMV splits along output rows.
//! * Copy splits along elements.
//!
//! Parallel launches write through [`SharedOutput`], which hands out
//! unsynchronized element access; callers guarantee that concurrent ranges
//! are disjoint, which every [`crate::SplitPlan`] does by construction.

mod copy;
mod gemm;
mod q40;
mod q8;

use std::cell::UnsafeCell;

pub use copy::{copy_range, CopyKernel};
pub use gemm::{gemm_i8_naive, I8Gemm, I8GemmKernel, GEMM_TILE_N};
pub use q40::{
    dequantize_q40, gemv_q40_range, quantize_q40, read_q40_file, write_q40_file, BlockQ40,
    GemvQ40Kernel, Q40Weight, Q40_BLOCK_BYTES, QK,
};
pub use q8::{quantize_q8, Q8Activation};

/// Rounds half away from zero, matching C's `roundf`.
#[inline]
pub(crate) fn round_half_away(x: f32) -> f32 {
    x.round()
}

/// Output buffer that parallel workers write into at disjoint indices.
pub struct SharedOutput<T> {
    cells: Box<[UnsafeCell<T>]>,
}

// SAFETY: access is only through `unsafe` methods whose contract forbids
// overlapping concurrent use of the same index.
unsafe impl<T: Send> Sync for SharedOutput<T> {}

impl<T: Copy + Default> SharedOutput<T> {
    pub fn new(len: usize) -> Self {
        SharedOutput {
            cells: (0..len).map(|_| UnsafeCell::new(T::default())).collect(),
        }
    }
}

impl<T: Copy> SharedOutput<T> {
    pub fn from_vec(v: Vec<T>) -> Self {
        SharedOutput {
            cells: v.into_iter().map(UnsafeCell::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// # Safety
    /// No other thread may access index `i` during this call.
    #[inline]
    pub unsafe fn write(&self, i: usize, v: T) {
        *self.cells[i].get() = v;
    }

    /// Mutable view of `start..end`.
    ///
    /// # Safety
    /// No other thread may access any index in the range while the slice is
    /// alive.
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn slice_mut(&self, start: usize, end: usize) -> &mut [T] {
        let cells = &self.cells[start..end];
        std::slice::from_raw_parts_mut(cells.as_ptr() as *mut T, cells.len())
    }

    pub fn as_slice(&mut self) -> &[T] {
        // SAFETY: `&mut self` excludes concurrent writers; UnsafeCell<T> has
        // the same layout as T.
        unsafe { std::slice::from_raw_parts(self.cells.as_ptr() as *const T, self.cells.len()) }
    }

    pub fn into_vec(self) -> Vec<T> {
        self.cells.into_vec().into_iter().map(UnsafeCell::into_inner).collect()
    }
}
