#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
}

fn scale_safe(v: i64, k: i32) -> i64 {
    v + k as i64
}

unsafe extern "C" fn scale(mut v: libc::c_int, mut k: libc::c_int) -> i64 {
    let v = v as i64;
    let v = v * 1000;
    scale_safe(v, k)
}

unsafe fn apply(mut n: libc::c_int) -> i64 {
    scale(n + 1, 3)
}

fn main() {
    let n: i32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    println!("{}", unsafe { apply(n) });
}
