#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
}

fn twice_safe(x: i32) -> i32 {
    x * 2
}

unsafe extern "C" fn twice(mut x: libc::c_int) -> libc::c_int {
    twice_safe(x)
}

fn main() {
    let n: i32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let cb = Some(twice);
    if let Some(g) = cb {
        println!("{}", unsafe { g(n) });
    }
    println!("{}", unsafe { twice(n + 1) });
}
