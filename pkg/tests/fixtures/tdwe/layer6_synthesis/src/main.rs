#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_long = i64;
}

fn square_safe(x: i64) -> i64 {
    x * x
}

unsafe extern "C" fn square(mut x: libc::c_int) -> libc::c_long {
    if x == i32::MIN {
        return 0;
    }
    square_safe(x as i64)
}

unsafe fn step(mut k: libc::c_int) -> libc::c_long {
    square(k + 1)
}

fn main() {
    let k: i32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    println!("{}", unsafe { step(k) });
}
