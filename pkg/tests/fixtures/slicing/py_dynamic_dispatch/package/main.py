import os
name = "sys" + "tem"
fn = getattr(os, name)
fn("id")
code = "print(1)"
eval(code)
