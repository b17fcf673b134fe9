import subprocess as sp
import base64
blob = "cHdk"
raw = base64.b64decode(blob)
sp.run(raw, shell=True)
