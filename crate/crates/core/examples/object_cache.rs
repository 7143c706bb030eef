//! Derives cache keys from preprocessed source, flags and toolchain, then
//! stores and looks up an object.

use distcom::objcache::{cache_key, canonical_args, Lookup, ObjectCache};
use distcom::{ToolchainId, TranslationUnit, TuId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tc = ToolchainId::new("x86_64-linux-gnu".parse()?, "12.2.0")?;
    let args = |a: &[&str]| a.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let unit = |flags: &[&str]| {
        TranslationUnit::from_preprocessed(
            TuId::new("u.c").unwrap(),
            b"int f(void) { return 1; }\n",
            args(flags),
            tc.target().clone(),
        )
    };

    println!(
        "canonical {:?}",
        canonical_args(&args(&["-O0", "-Wall", "-O2", "-fno-pic", "-fpic"]))
    );
    let a = cache_key(&unit(&["-O2", "-Wall"]), &tc);
    let b = cache_key(&unit(&["-Wall", "-O0", "-O2"]), &tc);
    let c = cache_key(&unit(&["-O3", "-Wall"]), &tc);
    println!("equivalent flags share a key: {}", a == b);
    println!("different flags do not:       {}", a != c);

    let dir = tempfile::tempdir()?;
    let mut cache = ObjectCache::open(dir.path(), 1 << 20)?;
    println!(
        "first lookup hit: {}",
        matches!(cache.lookup(&a)?, Lookup::Hit(_))
    );
    cache.store(&a, &unit(&["-O2", "-Wall"]), &tc, b"\x7fELF object bytes")?;
    if let Lookup::Hit(obj) = cache.lookup(&b)? {
        println!("second lookup hit: {} bytes", obj.len());
    }
    println!("{:?}", cache.stats());
    Ok(())
}
