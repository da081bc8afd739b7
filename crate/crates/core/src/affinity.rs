//! Thin wrapper over the platform thread-affinity API.

use std::io;

/// Pins the calling thread to logical core `core_id`.
#[cfg(target_os = "linux")]
pub fn pin_current_thread(core_id: usize) -> io::Result<()> {
    if core_id >= libc::CPU_SETSIZE as usize {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("core id {core_id} exceeds CPU_SETSIZE"),
        ));
    }
    // SAFETY: cpu_set_t is plain data; zeroed is the empty set, and the
    // pointer passed to sched_setaffinity is valid for its stated size.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(core_id, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(io::Error::last_os_error());
        }
    }
    Ok(())
}

#[cfg(not(target_os = "linux"))]
pub fn pin_current_thread(_core_id: usize) -> io::Result<()> {
    Err(io::Error::new(
        io::ErrorKind::Unsupported,
        "thread affinity is not supported on this platform",
    ))
}

/// Logical cores the current process may run on, ascending.
#[cfg(target_os = "linux")]
pub fn available_cores() -> Vec<usize> {
    // SAFETY: as above; sched_getaffinity fills `set` on success.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return fallback_cores();
        }
        (0..libc::CPU_SETSIZE as usize)
            .filter(|&c| libc::CPU_ISSET(c, &set))
            .collect()
    }
}

#[cfg(not(target_os = "linux"))]
pub fn available_cores() -> Vec<usize> {
    fallback_cores()
}

#[cfg_attr(target_os = "linux", allow(dead_code))]
fn fallback_cores() -> Vec<usize> {
    let n = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    (0..n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_least_one_core_available() {
        assert!(!available_cores().is_empty());
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn pinning_to_an_allowed_core_succeeds() {
        let core = available_cores()[0];
        std::thread::spawn(move || pin_current_thread(core))
            .join()
            .unwrap()
            .unwrap();
    }

    #[test]
    fn pinning_out_of_range_fails() {
        std::thread::spawn(|| assert!(pin_current_thread(1 << 20).is_err()))
            .join()
            .unwrap();
    }
}
