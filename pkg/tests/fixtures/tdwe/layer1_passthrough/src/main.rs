#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_long = i64;
}

fn add_safe(a: i32, b: i32) -> i32 {
    a + b
}

unsafe extern "C" fn add(mut a: libc::c_int, mut b: libc::c_int) -> libc::c_int {
    if a < 0 {
        return add_safe(a, b);
    }
    add_safe(a, b)
}

fn shifted(x: i32) -> i32 {
    unsafe { add(x, 10) }
}

fn main() {
    let x: i32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    println!("{}", shifted(x));
}
