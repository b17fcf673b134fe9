import os
def system(cmd):
    return len(cmd)
system("echo hi")
os.system("echo real")
