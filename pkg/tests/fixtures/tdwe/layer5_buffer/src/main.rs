#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_long = i64;
}

fn total_safe(xs: &[i32]) -> i32 {
    xs.iter().sum()
}

unsafe extern "C" fn total(mut xs: *const libc::c_int, mut n: libc::c_int) -> libc::c_int {
    if n <= 0 {
        return 0;
    }
    total_safe(std::slice::from_raw_parts(xs, n as usize))
}

unsafe fn show(mut buf: *const libc::c_int, mut len: libc::c_int) {
    println!("{}", total(buf, len));
}

fn main() {
    let v: Vec<i32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if v.is_empty() {
        println!("0");
        return;
    }
    unsafe { show(v.as_ptr(), v.len() as libc::c_int) }
}
