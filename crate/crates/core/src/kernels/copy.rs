use std::ops::Range;

use crate::pool::RangeKernel;

use super::SharedOutput;

/// Copies `src[units]` into `dst[units]`.
pub fn copy_range<T: Copy>(src: &[T], dst: &mut [T], units: Range<usize>) {
    dst[units.clone()].copy_from_slice(&src[units]);
}

/// Parallel tensor copy; units are elements.
pub struct CopyKernel<'a, T> {
    src: &'a [T],
    dst: SharedOutput<T>,
}

impl<'a, T: Copy + Default + Send + Sync> CopyKernel<'a, T> {
    pub fn new(src: &'a [T]) -> Self {
        CopyKernel {
            src,
            dst: SharedOutput::new(src.len()),
        }
    }

    pub fn units(&self) -> usize {
        self.src.len()
    }

    pub fn output(&mut self) -> &[T] {
        self.dst.as_slice()
    }

    pub fn into_output(self) -> Vec<T> {
        self.dst.into_vec()
    }
}

impl<T: Copy + Send + Sync> RangeKernel for CopyKernel<'_, T> {
    fn run(&self, _core: usize, units: Range<usize>) {
        // SAFETY: element ranges of one launch are disjoint.
        let dst = unsafe { self.dst.slice_mut(units.start, units.end) };
        dst.copy_from_slice(&self.src[units]);
    }
}
