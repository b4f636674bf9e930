use std::mem::transmute;
use std::os::raw::c_void as Void;

fn casts(x: i32, r: &u8) -> usize {
    let a = x as i64;
    let p = r as *const u8;
    let v = p as *const Void;
    let addr = v as usize;
    let chained = r as *const u8 as usize;
    let f: fn() = unsafe { transmute(addr) };
    let back = unsafe { transmute::<usize, *const u8>(addr) };
    a as usize + chained + back as usize
}
