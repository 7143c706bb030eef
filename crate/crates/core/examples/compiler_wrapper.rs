//! Shows which compiler command lines `distcom cc` sends to the farm and
//! which it runs locally.

use distcom::client::classify_invocation;

fn main() {
    let lines = [
        "gcc -c -O2 -Iinclude src/a.c -o build/a.o",
        "g++ -std=c++17 -c lib.cpp",
        "gcc -E src/a.c",
        "gcc -c -MD src/a.c",
        "gcc src/a.c -o app",
        "gcc -c a.c b.c",
        "gcc -c @args.rsp",
    ];
    for line in lines {
        let argv: Vec<String> = line.split_whitespace().map(String::from).collect();
        let plan = classify_invocation(&argv);
        match plan.reason {
            None => println!(
                "remote  {line}\n        object {:?}, remote flags {:?}",
                plan.object_path().unwrap(),
                plan.compile_flags
            ),
            Some(why) => println!("local   {line}\n        {why}"),
        }
    }
}
