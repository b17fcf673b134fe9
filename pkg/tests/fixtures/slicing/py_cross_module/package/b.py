import subprocess
def run(url):
    cmd = "curl -s " + url
    subprocess.call(cmd, shell=True)
