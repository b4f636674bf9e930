#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_long = i64;
}

use std::ffi::{CStr, CString};

fn vowels_safe(s: &CStr) -> i32 {
    s.to_bytes().iter().filter(|c| b"aeiou".contains(c)).count() as i32
}

unsafe extern "C" fn vowels(mut s: *const libc::c_char) -> libc::c_int {
    if s.is_null() {
        return 0;
    }
    vowels_safe(CStr::from_ptr(s))
}

fn count_in(word: &CStr) -> i32 {
    unsafe { vowels(word.as_ptr()) }
}

fn main() {
    let w = CString::new(std::env::args().nth(1).unwrap_or_default()).unwrap();
    println!("{}", count_in(&w));
}
