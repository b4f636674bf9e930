#![allow(dead_code, mutable_transmutes, non_camel_case_types, non_snake_case, non_upper_case_globals, unused_assignments, unused_mut)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_uint = u32;
    pub type c_void = core::ffi::c_void;
}

extern "C" {
    fn signal(sig: libc::c_int, handler: Option<unsafe extern "C" fn(libc::c_int)>) -> usize;
}

#[derive(Copy, Clone)]
#[repr(C)]
pub struct record {
    pub name: *const libc::c_char,
    pub len: libc::c_int,
}

#[derive(Copy, Clone)]
#[repr(C)]
pub struct pair_buf {
    pub data: *mut libc::c_int,
    pub n: libc::c_int,
}

static mut counter: libc::c_int = 0 as libc::c_int;
static mut sig_seen: libc::c_int = 0 as libc::c_int;
static mut verbose: libc::c_int = 0 as libc::c_int;

#[no_mangle]
pub unsafe extern "C" fn str_len(mut s: *const libc::c_char) -> libc::c_int {
    let mut n: libc::c_int = 0 as libc::c_int;
    while *s.offset(n as isize) as libc::c_int != '\0' as i32 {
        n += 1;
    }
    return n;
}

#[no_mangle]
pub unsafe extern "C" fn count_char(mut s: *const libc::c_char, mut c: libc::c_char) -> libc::c_int {
    let mut k: libc::c_int = 0 as libc::c_int;
    while *s != 0 {
        if *s as libc::c_int == c as libc::c_int {
            k += 1;
        }
        s = s.offset(1);
    }
    return k;
}

#[no_mangle]
pub unsafe extern "C" fn sum_buf(mut buf: *const libc::c_int, mut n: libc::c_int) -> libc::c_int {
    let mut t: libc::c_int = 0 as libc::c_int;
    let mut i: libc::c_int = 0 as libc::c_int;
    while i < n {
        t += *buf.offset(i as isize);
        i += 1;
    }
    return t;
}

#[no_mangle]
pub unsafe extern "C" fn max_of(mut a: libc::c_int, mut b: libc::c_int) -> libc::c_int {
    return if a > b { a } else { b };
}

#[no_mangle]
pub unsafe extern "C" fn min_of(mut a: libc::c_int, mut b: libc::c_int) -> libc::c_int {
    return if a < b { a } else { b };
}

#[no_mangle]
pub unsafe extern "C" fn clamp_val(mut v: libc::c_int, mut lo: libc::c_int, mut hi: libc::c_int) -> libc::c_int {
    return max_of(lo, min_of(v, hi));
}

#[no_mangle]
pub unsafe extern "C" fn fill_buf(mut buf: *mut libc::c_int, mut n: libc::c_int, mut v: libc::c_int) {
    let mut i: libc::c_int = 0 as libc::c_int;
    while i < n {
        *buf.offset(i as isize) = v + i;
        i += 1;
    }
}

#[no_mangle]
pub unsafe extern "C" fn checksum(mut s: *const libc::c_char) -> libc::c_uint {
    let mut h: libc::c_uint = 5381 as libc::c_int as libc::c_uint;
    while *s != 0 {
        let fresh0 = s;
        s = s.offset(1);
        h = h.wrapping_mul(33 as libc::c_int as libc::c_uint).wrapping_add(*fresh0 as u8 as libc::c_uint);
    }
    return h;
}

#[no_mangle]
pub unsafe extern "C" fn pb_total(mut p: *const pair_buf) -> libc::c_int {
    return sum_buf((*p).data, (*p).n);
}

#[no_mangle]
pub unsafe extern "C" fn record_len(mut r: *const record) -> libc::c_int {
    return (*r).len;
}

#[no_mangle]
pub unsafe extern "C" fn bump_counter() -> libc::c_int {
    counter += 1 as libc::c_int;
    return counter;
}

#[no_mangle]
pub unsafe extern "C" fn on_signal(mut sig: libc::c_int) {
    sig_seen = sig;
}

#[no_mangle]
pub unsafe extern "C" fn legacy_dump() {
    println!("legacy");
}

#[no_mangle]
pub unsafe extern "C" fn print_stats(mut s: *const libc::c_char) {
    let mut id: libc::c_int = bump_counter();
    let text = std::ffi::CStr::from_ptr(s).to_string_lossy();
    println!("{} {} len={} e={} sum={}", id, text, str_len(s), count_char(s, 'e' as i32 as libc::c_char), checksum(s));
    if verbose != 0 {
        println!("  verbose");
    }
}

unsafe fn main_0(mut argc: libc::c_int, mut argv: *mut *mut libc::c_char) -> libc::c_int {
    let mut buf: [libc::c_int; 4] = [0; 4];
    let mut pb: pair_buf = pair_buf {
        data: buf.as_mut_ptr(),
        n: 4 as libc::c_int,
    };
    let mut r: record = record {
        name: b"tally\0" as *const u8 as *const libc::c_char,
        len: 5 as libc::c_int,
    };
    let mut fp: *const () = max_of as *const ();
    if fp.is_null() {
        return 1 as libc::c_int;
    }
    signal(10 as libc::c_int, Some(on_signal as unsafe extern "C" fn(libc::c_int)));
    verbose = (argc > 3 as libc::c_int) as libc::c_int;
    fill_buf(buf.as_mut_ptr(), 4 as libc::c_int, argc);
    let mut i: libc::c_int = 1 as libc::c_int;
    while i < argc {
        print_stats(*argv.offset(i as isize));
        i += 1;
    }
    println!(
        "total={} clamp={} rec={} sig={}",
        pb_total(&mut pb),
        clamp_val(sum_buf(buf.as_mut_ptr(), 4 as libc::c_int), 0 as libc::c_int, 20 as libc::c_int),
        record_len(&mut r),
        sig_seen
    );
    return if argc > 1 as libc::c_int { 0 as libc::c_int } else { 2 as libc::c_int };
}

pub fn main() {
    let mut args: Vec<*mut libc::c_char> = Vec::new();
    for arg in ::std::env::args() {
        args.push(
            (::std::ffi::CString::new(arg)).expect("Failed to convert argument into CString.").into_raw(),
        );
    }
    args.push(::core::ptr::null_mut());
    unsafe {
        ::std::process::exit(main_0((args.len() - 1) as libc::c_int, args.as_mut_ptr() as *mut *mut libc::c_char) as i32)
    }
}
