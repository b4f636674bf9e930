#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
}

mod c;
mod a;
mod b;

fn main() {
    let n: i32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    println!("{}", c::from_c(n));
    println!("{}", unsafe { c::clamp(n - 3) });
    println!("{}", a::from_a(n));
    println!("{}", unsafe { a::clamp(n - 3) });
    println!("{}", b::from_b(n));
    println!("{}", unsafe { b::clamp(n - 3) });
}
