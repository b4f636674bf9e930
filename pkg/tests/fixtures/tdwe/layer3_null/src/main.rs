#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_long = i64;
}

fn describe_safe(v: Option<&i32>) -> i32 {
    match v {
        Some(x) => *x * 2,
        None => -1,
    }
}

unsafe extern "C" fn describe(mut v: *const libc::c_int) -> libc::c_int {
    if v.is_null() {
        return describe_safe(None);
    }
    describe_safe(v.as_ref())
}

unsafe fn run(mut have: libc::c_int, mut value: libc::c_int) {
    if have != 0 {
        println!("{}", describe(&value as *const libc::c_int));
    } else {
        println!("{}", describe(std::ptr::null()));
    }
}

fn main() {
    let arg: Option<i32> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    unsafe { run(arg.is_some() as libc::c_int, arg.unwrap_or(0)) }
}
