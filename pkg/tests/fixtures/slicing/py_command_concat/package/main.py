import os
u = input()
cmd = "chmod +x " + u
os.system(cmd)
