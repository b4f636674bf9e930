#![allow(unused_mut, unused_unsafe)]
use crate::libc;

fn clamp_safe(v: i32) -> i32 {
    v.max(0).min(9)
}

pub unsafe extern "C" fn clamp(mut v: libc::c_int) -> libc::c_int {
    clamp_safe(v)
}

pub fn from_b(n: i32) -> i32 {
    unsafe { clamp(n) }
}
