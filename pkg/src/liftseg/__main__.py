from liftseg.cli import console_main

console_main()
